"""Streaming path statistics of a play.

All second moments are *uncentered* and every statistic is normalised per
unit of time: a sum over rounds divided by ``T = n * dt``.

Sums are kept as exact floating-point expansions (Shewchuk partials), so a
value is the correctly rounded total of everything that was added, no matter
in which order.  That makes :func:`merge` order independent.  Whole arrays
go through a vectorised pairwise two-sum that returns a double-double total
per statistic before being folded in.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from capgame.bounds import big_gamma, cubic_ratio, gamma
from capgame.errors import CAPGameError

SUM_FIELDS = (
    "sum_s",
    "sum_m",
    "sum_s2",
    "sum_m2",
    "sum_sm",
    "sum_diff2",
    "sum_2ms2",
    "sum_log_s",
    "sum_log_m",
    "sum_gamma_abs_s",
    "sum_gamma_abs_m",
    "sum_Gamma_s",
    "sum_Gamma_m",
)
MAX_FIELDS = ("max_abs_s", "max_abs_m", "max_s_ratio", "max_m_ratio", "max_2ms_ratio")


class ExactSum:
    """Running sum stored as nonoverlapping partials (Shewchuk's algorithm)."""

    __slots__ = ("partials",)

    def __init__(self, values=()):
        self.partials: list[float] = []
        for v in values:
            self.add(v)

    def add(self, x: float) -> None:
        partials = self.partials
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def merge(self, other: "ExactSum") -> None:
        for p in other.partials:
            self.add(p)

    def copy(self) -> "ExactSum":
        out = ExactSum()
        out.partials = list(self.partials)
        return out

    @property
    def value(self) -> float:
        return math.fsum(self.partials)

    def __repr__(self) -> str:
        return f"ExactSum({self.value!r})"


#: rounds per chunk in batch updates; keeps the working set cache-resident
CHUNK = 2048


def _two_sum_tree(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # x is (r, 2**k); halve the last axis until one column is left
    lo = np.zeros(x.shape[0])
    width = x.shape[1]
    while width > 1:
        width //= 2
        a = x[:, :width]
        b = x[:, width:]
        s = a + b
        bb = s - a
        t = s - bb
        np.subtract(a, t, out=t)
        np.subtract(b, bb, out=bb)
        t += bb
        lo += t.sum(axis=1)
        x = s
    return x[:, 0], lo


def _tree_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # zero padding to a power of two is harmless: zeros add exactly
    r, n = v.shape
    if n == 0:
        return np.zeros(r), np.zeros(r)
    width = 1 << (n - 1).bit_length()
    if width != n:
        v = np.concatenate([v, np.zeros((r, width - n))], axis=1)
    return _two_sum_tree(v)


def pairwise_two_sum(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum each row of ``rows`` to roughly twice working precision.

    Pairwise reduction where every addition's rounding error is recovered
    with Knuth's TwoSum and collected separately.  Long rows are reduced in
    cache-sized chunks whose totals are then reduced the same way.
    Returns ``(hi, lo)``.
    """
    v = np.array(rows, dtype=float, ndmin=2)
    n = v.shape[1]
    if n <= CHUNK:
        return _tree_rows(v)
    his, lo = [], np.zeros(v.shape[0])
    for i in range(0, n, CHUNK):
        h, l = _tree_rows(v[:, i : i + CHUNK])
        his.append(h)
        lo += l
    hi, l = pairwise_two_sum(np.array(his).T)
    return hi, lo + l


def _terms(s: np.ndarray, m: np.ndarray) -> np.ndarray:
    d = s - m
    q = 2.0 * m - s
    return np.stack(
        [
            s,
            m,
            s * s,
            m * m,
            s * m,
            d * d,
            q * q,
            np.log1p(s),
            np.log1p(m),
            np.abs(gamma(s)),
            np.abs(gamma(m)),
            big_gamma(s),
            big_gamma(m),
        ]
    )


class MomentAccumulator:
    """Streaming sums over rounds of Investor's return ``s_n`` and the index
    return ``m_n``.

    ``update`` takes one round; ``update_many`` takes arrays.  Squared sums,
    log sums, the cubic-envelope sums and the running maxima needed by the
    bounds are all tracked online.
    """

    def __init__(self, dt: float):
        if not dt > 0:
            raise CAPGameError(f"dt must be positive, got {dt!r}")
        self.dt = float(dt)
        self.n = 0
        self._sums = {name: ExactSum() for name in SUM_FIELDS}
        self.max_abs_s = 0.0
        self.max_abs_m = 0.0
        self.max_s_ratio = 0.0
        self.max_m_ratio = 0.0
        self.max_2ms_ratio = 0.0

    def __getattr__(self, name):
        sums = self.__dict__.get("_sums")
        if sums is not None and name in sums:
            return sums[name].value
        raise AttributeError(name)

    @staticmethod
    def _check(s, m) -> None:
        if np.any(np.asarray(s) <= -1.0) or np.any(np.asarray(m) <= -1.0):
            raise CAPGameError("returns must exceed -1 (log undefined at a wipeout)")

    def update(self, s: float, m: float) -> "MomentAccumulator":
        """Fold in one round; returns ``self``."""
        s = float(s)
        m = float(m)
        self._check(s, m)
        d = s - m
        q = 2.0 * m - s
        values = (
            s,
            m,
            s * s,
            m * m,
            s * m,
            d * d,
            q * q,
            math.log1p(s),
            math.log1p(m),
            abs(gamma(s)),
            abs(gamma(m)),
            big_gamma(s),
            big_gamma(m),
        )
        for name, v in zip(SUM_FIELDS, values):
            self._sums[name].add(v)
        self.n += 1
        self.max_abs_s = max(self.max_abs_s, abs(s))
        self.max_abs_m = max(self.max_abs_m, abs(m))
        self.max_s_ratio = max(self.max_s_ratio, cubic_ratio(s))
        self.max_m_ratio = max(self.max_m_ratio, cubic_ratio(m))
        self.max_2ms_ratio = max(self.max_2ms_ratio, cubic_ratio(q))
        return self

    def update_many(self, s, m) -> "MomentAccumulator":
        """Fold in a block of rounds at once; returns ``self``."""
        s = np.asarray(s, dtype=float).ravel()
        m = np.asarray(m, dtype=float).ravel()
        if s.shape != m.shape:
            raise CAPGameError("s and m must have equal length")
        if s.size == 0:
            return self
        self._check(s, m)
        if s.size <= CHUNK:
            hi, lo = _tree_rows(_terms(s, m))
        else:
            his, lo = [], np.zeros(len(SUM_FIELDS))
            for i in range(0, s.size, CHUNK):
                h, l = _tree_rows(_terms(s[i : i + CHUNK], m[i : i + CHUNK]))
                his.append(h)
                lo += l
            hi, l = pairwise_two_sum(np.array(his).T)
            lo += l
        for name, h, l in zip(SUM_FIELDS, hi.tolist(), lo.tolist()):
            acc = self._sums[name]
            acc.add(h)
            acc.add(l)
        self.n += s.size
        self.max_abs_s = max(self.max_abs_s, float(np.max(np.abs(s))))
        self.max_abs_m = max(self.max_abs_m, float(np.max(np.abs(m))))
        self.max_s_ratio = max(self.max_s_ratio, float(np.max(cubic_ratio(s))))
        self.max_m_ratio = max(self.max_m_ratio, float(np.max(cubic_ratio(m))))
        self.max_2ms_ratio = max(self.max_2ms_ratio, float(np.max(cubic_ratio(2.0 * m - s))))
        return self

    def copy(self) -> "MomentAccumulator":
        out = MomentAccumulator(self.dt)
        out.n = self.n
        out._sums = {k: v.copy() for k, v in self._sums.items()}
        for name in MAX_FIELDS:
            setattr(out, name, getattr(self, name))
        return out

    def sums(self) -> dict[str, float]:
        return {name: acc.value for name, acc in self._sums.items()}

    def maxima(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in MAX_FIELDS}

    def summarize(self) -> "MomentSummary":
        return summarize(self)

    def __repr__(self) -> str:
        return f"MomentAccumulator(n={self.n}, dt={self.dt!r})"


def update(acc: MomentAccumulator, s: float, m: float) -> MomentAccumulator:
    """Return a copy of ``acc`` with one more round folded in."""
    return acc.copy().update(s, m)


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Combine accumulators of two disjoint stretches of rounds."""
    if a.dt != b.dt:
        raise CAPGameError(f"cannot merge accumulators with dt {a.dt!r} and {b.dt!r}")
    out = a.copy()
    for name in SUM_FIELDS:
        out._sums[name].merge(b._sums[name])
    out.n += b.n
    for name in MAX_FIELDS:
        setattr(out, name, max(getattr(a, name), getattr(b, name)))
    return out


@dataclass(frozen=True)
class MomentSummary:
    """Per-unit-time statistics of a play (uncentered second moments)."""

    n: int
    dt: float
    T: float
    mu_s: float
    mu_m: float
    sigma_s_sq: float
    sigma_m_sq: float
    sigma_sm: float
    sigma_diff_sq: float
    sigma_2ms_sq: float
    lambda_s: float
    lambda_m: float
    gamma_abs_s: float
    gamma_abs_m: float
    Gamma_s: float
    Gamma_m: float
    max_abs_s: float
    max_abs_m: float
    max_s_ratio: float
    max_m_ratio: float
    max_2ms_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSummary":
        return cls(**d)


def summarize(acc: MomentAccumulator) -> MomentSummary:
    """Divide every sum by ``T = n * dt``."""
    if acc.n < 1:
        raise CAPGameError("cannot summarize an empty accumulator")
    T = acc.n * acc.dt
    v = acc.sums()
    return MomentSummary(
        n=acc.n,
        dt=acc.dt,
        T=T,
        mu_s=v["sum_s"] / T,
        mu_m=v["sum_m"] / T,
        sigma_s_sq=v["sum_s2"] / T,
        sigma_m_sq=v["sum_m2"] / T,
        sigma_sm=v["sum_sm"] / T,
        sigma_diff_sq=v["sum_diff2"] / T,
        sigma_2ms_sq=v["sum_2ms2"] / T,
        lambda_s=v["sum_log_s"] / T,
        lambda_m=v["sum_log_m"] / T,
        gamma_abs_s=v["sum_gamma_abs_s"] / T,
        gamma_abs_m=v["sum_gamma_abs_m"] / T,
        Gamma_s=v["sum_Gamma_s"] / T,
        Gamma_m=v["sum_Gamma_m"] / T,
        **acc.maxima(),
    )


def capm_residual(summary: MomentSummary) -> float:
    """``mu_s - mu_m + sigma_m^2 - sigma_sm``, predicted to be near zero."""
    return summary.mu_s - summary.mu_m + summary.sigma_m_sq - summary.sigma_sm


def deficit_residual(summary: MomentSummary) -> float:
    """``lambda_s - lambda_m + sigma_{s-m}^2 / 2``."""
    return summary.lambda_s - summary.lambda_m + 0.5 * summary.sigma_diff_sq


def moments_of_path(s, m, dt: float) -> MomentSummary:
    """Summary of a whole path in one call."""
    return MomentAccumulator(dt).update_many(s, m).summarize()
