from fractions import Fraction

from hypothesis import settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def rationals(lo=Fraction(0), hi=Fraction(1), max_den=1000):
    """Fractions in [lo, hi)."""
    return st.fractions(min_value=lo, max_value=hi, max_denominator=max_den).filter(lambda v: v < hi)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS.values():
        terminalreporter.write_line(line)
