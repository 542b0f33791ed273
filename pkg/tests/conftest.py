from fractions import Fraction
import math

import numpy as np
import pytest

# Two-round hand path used throughout: dt = 1, T = 2
HAND_S = (0.01, -0.02)
HAND_M = (0.005, 0.01)


def exact_mean(values, T):
    """Sum of floats evaluated exactly with Fractions, divided by T, rounded once."""
    return float(sum((Fraction(v) for v in values), Fraction(0)) / Fraction(T))


def brute_force_summary(s, m, dt):
    """Every statistic straight from its defining sum, exact where possible."""
    s = [float(v) for v in s]
    m = [float(v) for v in m]
    T = len(s) * dt
    F = Fraction
    sq = lambda a: F(a) * F(a)  # noqa: E731
    total = lambda it: float(sum(it, F(0)) / F(T))  # noqa: E731
    return {
        "mu_s": total(F(a) for a in s),
        "mu_m": total(F(b) for b in m),
        "sigma_s_sq": total(sq(a) for a in s),
        "sigma_m_sq": total(sq(b) for b in m),
        "sigma_sm": total(F(a) * F(b) for a, b in zip(s, m)),
        "sigma_diff_sq": total((F(a) - F(b)) ** 2 for a, b in zip(s, m)),
        "sigma_2ms_sq": total((2 * F(b) - F(a)) ** 2 for a, b in zip(s, m)),
        "lambda_s": math.fsum(math.log1p(a) for a in s) / T,
        "lambda_m": math.fsum(math.log1p(b) for b in m) / T,
        "max_abs_s": max(abs(a) for a in s),
        "max_abs_m": max(abs(b) for b in m),
        "max_s_ratio": max(abs(a) / abs(1 + a) ** 3 for a in s),
        "max_m_ratio": max(abs(b) / abs(1 + b) ** 3 for b in m),
        "max_2ms_ratio": max(abs(2 * b - a) / abs(1 + 2 * b - a) ** 3 for a, b in zip(s, m)),
        "T": T,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20011201)


# one line per acceptance check, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
