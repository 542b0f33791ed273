"""Taylor envelopes of ln(1+x), the finite-path CAPM error bounds, and the
witness verifier for the speculator strategies.

Every bound here is evaluated from path statistics carried by a
:class:`~capgame.moments.MomentSummary`; nothing needs a second pass over
the returns.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Mapping

import numpy as np

from capgame.errors import CAPGameError, MissingLedgerError

if TYPE_CHECKING:
    from capgame.moments import MomentSummary

#: relative slack absorbed by every implication check
IMPLICATION_RTOL = 1e-12
#: absolute slack on the deficit sandwich gaps
SANDWICH_ATOL = 1e-12
#: log-grid the reports minimise the CAPM bounds over
EPSILON_GRID = tuple(float(e) for e in np.geomspace(1e-3, 0.33, 25))


def _check_domain(x) -> None:
    if np.any(np.asarray(x) <= -1.0):
        raise CAPGameError("gamma(x) is defined only for x > -1")


def gamma(x):
    """Lower cubic envelope ``(1/3) * (x / (1 + x))**3``; defined for x > -1."""
    _check_domain(x)
    r = x / (1.0 + x)
    return r * r * r / 3.0


def big_gamma(x):
    """Upper cubic envelope ``(1/3) * x**3``."""
    return x * x * x / 3.0


def taylor_remainder(x):
    """``ln(1+x) - x + x**2/2``, the quantity sandwiched by gamma and big_gamma."""
    if isinstance(x, np.ndarray):
        return np.log1p(x) - x + 0.5 * x * x
    return math.log1p(x) - x + 0.5 * x * x


def cubic_ratio(x):
    """``|x| / |1+x|**3``; infinite when ``1 + x <= 0``."""
    if isinstance(x, np.ndarray):
        with np.errstate(divide="ignore"):
            d = np.abs(1.0 + x)
            out = np.abs(x) / (d * d * d)
        return np.where(1.0 + x > 0.0, out, np.inf)
    if 1.0 + x <= 0.0:
        return math.inf
    return abs(x) / abs(1.0 + x) ** 3


def _check_eps_alpha(epsilon: float, alpha: float, eps_max: float) -> None:
    if not 0.0 < epsilon < eps_max:
        raise CAPGameError(f"epsilon must lie in (0, {eps_max:g}), got {epsilon!r}")
    if not alpha > 0.0:
        raise CAPGameError(f"alpha must be positive, got {alpha!r}")


def _mul(a: float, b: float) -> float:
    # inf * 0 must stay 0: a zero second moment kills the term outright
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def prop1_upper_bound(summary: MomentSummary, epsilon: float, alpha: float) -> float:
    """Right-hand side the CAPM residual stays below unless blend(epsilon) wins.

    ``eps/2 * s2(s-m) + [s2(s) * max ratio(s) + s2(m) * max ratio(m)
    + s2(m) * max|m|] / (3 eps) + ln(1/alpha) / (T eps)``
    """
    _check_eps_alpha(epsilon, alpha, 1.0)
    s = summary
    third = 1.0 / (3.0 * epsilon)
    return (
        0.5 * epsilon * s.sigma_diff_sq
        + third * _mul(s.sigma_s_sq, s.max_s_ratio)
        + third * _mul(s.sigma_m_sq, s.max_m_ratio)
        + third * _mul(s.sigma_m_sq, s.max_abs_m)
        + math.log(1.0 / alpha) / (s.T * epsilon)
    )


def prop1_lower_bound(summary: MomentSummary, epsilon: float, alpha: float) -> float:
    """Value the CAPM residual stays above unless short-blend(epsilon) wins."""
    _check_eps_alpha(epsilon, alpha, 1.0 / 3.0)
    s = summary
    third = 1.0 / (3.0 * epsilon)
    return (
        -0.5 * epsilon * s.sigma_diff_sq
        - third * _mul(s.sigma_m_sq, s.max_m_ratio)
        - third * _mul(s.sigma_2ms_sq, s.max_2ms_ratio)
        - third * _mul(s.sigma_m_sq, s.max_abs_m)
        - math.log(1.0 / alpha) / (s.T * epsilon)
    )


def optimal_upper_bound(
    summary: MomentSummary, alpha: float, grid=EPSILON_GRID
) -> tuple[float, float]:
    """(epsilon, bound) minimising :func:`prop1_upper_bound` over ``grid``."""
    values = [(prop1_upper_bound(summary, e, alpha), e) for e in grid]
    bound, eps = min(values)
    return eps, bound


def optimal_lower_bound(
    summary: MomentSummary, alpha: float, grid=EPSILON_GRID
) -> tuple[float, float]:
    """(epsilon, bound) maximising :func:`prop1_lower_bound` over ``grid``."""
    values = [(prop1_lower_bound(summary, e, alpha), e) for e in grid if e < 1.0 / 3.0]
    bound, eps = max(values)
    return eps, bound


def prop2_sandwich(summary: MomentSummary) -> tuple[float, float]:
    """Gaps of the two-sided sandwich around the performance deficit.

    Returns ``(lower_gap, upper_gap)`` where::

        lower_gap = deficit - (capm - |gamma(s)|/T - Gamma(m)/T)
        upper_gap = (capm + Gamma(s)/T + |gamma(m)|/T) - deficit

    Both are nonnegative on every path up to rounding.
    """
    from capgame.moments import capm_residual, deficit_residual

    capm = capm_residual(summary)
    deficit = deficit_residual(summary)
    lhs = capm - summary.gamma_abs_s - summary.Gamma_m
    rhs = capm + summary.Gamma_s + summary.gamma_abs_m
    return deficit - lhs, rhs - deficit


def p2_slacks(summary: MomentSummary) -> tuple[float, float]:
    """(lower, upper) correction terms of the deficit sandwich, per unit time."""
    return (
        summary.gamma_abs_s + summary.Gamma_m,
        summary.Gamma_s + summary.gamma_abs_m,
    )


# -- witness verification -------------------------------------------------


def blend_label(epsilon: float) -> str:
    return f"blend:{epsilon!r}"


def short_blend_label(epsilon: float) -> str:
    return f"short-blend:{epsilon!r}"


def split_label(epsilon: float) -> str:
    return f"split:{epsilon!r}"


def _ledger(play, label: str) -> float:
    try:
        return play.speculator_capitals[label]
    except KeyError:
        raise MissingLedgerError(f"play carries no speculator ledger {label!r}") from None


def _beats_index(capital: float, index_capital: float, alpha: float) -> bool:
    return capital >= (index_capital / alpha) * (1.0 - IMPLICATION_RTOL)


def _below(value: float, bound: float) -> bool:
    return value < bound + IMPLICATION_RTOL * max(abs(value), abs(bound))


def verify_witness_upper(play, epsilon: float, alpha: float, scale: float = 1.0) -> bool:
    """Either blend(epsilon) multiplied its capital by 1/alpha relative to the
    index, or the CAPM residual sits below the upper bound.

    ``scale`` multiplies the bound; anything other than 1.0 is a negative
    control.
    """
    capital = _ledger(play, blend_label(epsilon))
    bound = scale * prop1_upper_bound(play.summary, epsilon, alpha)
    residual = play.capm_residual
    return _beats_index(capital, play.index_capital, alpha) or _below(residual, bound)


def verify_witness_lower(play, epsilon: float, alpha: float, scale: float = 1.0) -> bool:
    """Mirror image of :func:`verify_witness_upper` for short-blend(epsilon)."""
    capital = _ledger(play, short_blend_label(epsilon))
    bound = scale * prop1_lower_bound(play.summary, epsilon, alpha)
    residual = play.capm_residual
    return _beats_index(capital, play.index_capital, alpha) or _below(bound, residual)


def verify_witness_split(play, epsilon: float, alpha: float, scale: float = 1.0) -> bool:
    """Equal split of blend and short-blend: either the combined account
    reaches 1/alpha times the index or the residual lies inside both bounds
    taken at level alpha/2."""
    capital = _ledger(play, split_label(epsilon))
    upper = scale * prop1_upper_bound(play.summary, epsilon, alpha / 2.0)
    lower = scale * prop1_lower_bound(play.summary, epsilon, alpha / 2.0)
    residual = play.capm_residual
    inside = _below(residual, upper) and _below(lower, residual)
    return _beats_index(capital, play.index_capital, alpha) or inside


@dataclass
class PredictionReport:
    """Residuals, bounds and witness verdicts for one play at one (epsilon, alpha)."""

    epsilon: float
    alpha: float
    capm_residual: float
    deficit_residual: float
    upper_bound_p1: float
    lower_bound_p1: float
    p2_upper_slack: float
    p2_lower_slack: float
    speculator_terminal_ratio_blend: float
    speculator_terminal_ratio_short: float
    witness_verdict_upper: bool
    witness_verdict_lower: bool

    def to_dict(self) -> dict:
        return asdict(self)


def predict(play, epsilon: float, alpha: float) -> PredictionReport:
    """Assemble a :class:`PredictionReport`; lower-side fields need epsilon < 1/3."""
    summary = play.summary
    lower_slack, upper_slack = p2_slacks(summary)
    ratio = lambda label: _ledger(play, label) / play.index_capital  # noqa: E731
    return PredictionReport(
        epsilon=epsilon,
        alpha=alpha,
        capm_residual=play.capm_residual,
        deficit_residual=play.deficit_residual,
        upper_bound_p1=prop1_upper_bound(summary, epsilon, alpha),
        lower_bound_p1=prop1_lower_bound(summary, epsilon, alpha),
        p2_upper_slack=upper_slack,
        p2_lower_slack=lower_slack,
        speculator_terminal_ratio_blend=ratio(blend_label(epsilon)),
        speculator_terminal_ratio_short=ratio(short_blend_label(epsilon)),
        witness_verdict_upper=verify_witness_upper(play, epsilon, alpha),
        witness_verdict_lower=verify_witness_lower(play, epsilon, alpha),
    )


def witness_speculators(epsilons) -> Mapping[str, object]:
    """Named blend, short-blend and equal-split policies for every epsilon."""
    from capgame.strategies import Blend, ShortBlend, Split

    policies: dict[str, object] = {}
    for eps in epsilons:
        blend = Blend(eps)
        policies[blend_label(eps)] = blend
        if eps < 1.0 / 3.0:
            short = ShortBlend(eps)
            policies[short_blend_label(eps)] = short
            policies[split_label(eps)] = Split([(0.5, blend), (0.5, short)])
    return policies
