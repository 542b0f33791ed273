"""Players: Investor policies, Market models and Speculator policies.

Every player is a callable taking a :class:`~capgame.protocol.RoundView` and
returning its move, so it can drive :func:`~capgame.protocol.run_game`.
Players that can also be evaluated on a whole path at once expose a
vectorised method (``weight_path`` for investors, ``gross_path`` for
speculators, ``returns`` for markets) used by
:func:`~capgame.protocol.play_batch`.
"""
from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np

from capgame.errors import CAPGameError, InvalidConfigError, InvalidWeightsError
from capgame.protocol import GameConfig, RoundView, as_returns, as_weights, index_weights

CLAMP_FLOOR = -1.0 + 1e-9


def _gross_rows(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", np.broadcast_to(h, x.shape), 1.0 + x)


# -- Investor --------------------------------------------------------------


class HoldIndex:
    """All capital in security 0 every round."""

    def __call__(self, view: RoundView) -> np.ndarray:
        return index_weights(view.config.width)

    def weight_path(self, returns: np.ndarray) -> np.ndarray:
        return index_weights(returns.shape[1])

    def __repr__(self) -> str:
        return "HoldIndex()"


class FixedWeights:
    """Rebalance to the same fractions every round."""

    def __init__(self, weights):
        self.weights = as_weights(weights)

    def __call__(self, view: RoundView) -> np.ndarray:
        return self.weights

    def weight_path(self, returns: np.ndarray) -> np.ndarray:
        if returns.shape[1] != self.weights.size:
            raise InvalidWeightsError(f"{self.weights.size} weights for {returns.shape[1]} securities")
        return self.weights

    def __repr__(self) -> str:
        return f"FixedWeights({self.weights.tolist()})"


class BuyAndHold:
    """Buy once, never trade: share counts stay fixed, so the capital
    fractions drift with relative prices."""

    def __init__(self, initial):
        self.initial = as_weights(initial)
        self.reset()

    def reset(self) -> None:
        self._current = self.initial
        self._seen = 0

    def __call__(self, view: RoundView) -> np.ndarray:
        if len(view.history) < self._seen:
            self.reset()
        for _, x in view.history[self._seen :]:
            grown = self._current * (1.0 + x)
            self._current = grown / grown.sum()
        self._seen = len(view.history)
        return self._current

    def weight_path(self, returns: np.ndarray) -> np.ndarray:
        growth = np.vstack([np.ones(returns.shape[1]), np.cumprod(1.0 + returns[:-1], axis=0)])
        held = self.initial * growth
        return held / held.sum(axis=1, keepdims=True)

    def __repr__(self) -> str:
        return f"BuyAndHold({self.initial.tolist()})"


class Schedule:
    """A prescribed list of allocations, one per round."""

    def __init__(self, rows: Sequence):
        self.rows = [as_weights(r) for r in rows]

    def __call__(self, view: RoundView) -> np.ndarray:
        if view.round > len(self.rows):
            raise CAPGameError(f"schedule has {len(self.rows)} rounds, round {view.round} requested")
        return self.rows[view.round - 1]

    def weight_path(self, returns: np.ndarray) -> np.ndarray:
        if len(self.rows) < returns.shape[0]:
            raise CAPGameError(f"schedule has {len(self.rows)} rounds, path has {returns.shape[0]}")
        return np.array(self.rows[: returns.shape[0]])


def parse_investor(spec: str, width: int):
    """``hold-index``, ``fixed:w0,w1,...`` or ``buy-and-hold:w0,w1,...``."""
    spec = spec.strip()
    if spec == "hold-index":
        return HoldIndex()
    kind, _, rest = spec.partition(":")
    if kind in ("fixed", "buy-and-hold") and rest:
        try:
            w = [float(v) for v in rest.split(",")]
        except ValueError:
            raise InvalidWeightsError(f"bad weights in investor spec {spec!r}") from None
        if len(w) != width:
            raise InvalidWeightsError(f"investor spec {spec!r} has {len(w)} weights, market has {width} securities")
        return FixedWeights(w) if kind == "fixed" else BuyAndHold(w)
    raise InvalidWeightsError(f"unknown investor spec {spec!r}")


# -- Speculator ------------------------------------------------------------


def blend_move(epsilon: float, g) -> np.ndarray:
    """``epsilon * g + (1 - epsilon) * e_0``: epsilon of capital in Investor's
    portfolio, the rest in the index."""
    if not 0.0 < epsilon < 1.0:
        raise CAPGameError(f"blend epsilon must lie in (0, 1), got {epsilon!r}")
    g = np.asarray(g, dtype=float)
    h = epsilon * g
    h[0] += 1.0 - epsilon
    return h


def short_blend_move(epsilon: float, g) -> np.ndarray:
    """``-epsilon * g + (1 + epsilon) * e_0``: short Investor's portfolio,
    lever up the index."""
    if not 0.0 < epsilon < 1.0 / 3.0:
        raise CAPGameError(f"short-blend epsilon must lie in (0, 1/3), got {epsilon!r}")
    g = np.asarray(g, dtype=float)
    h = -epsilon * g
    h[0] += 1.0 + epsilon
    return h


def short_blend_guard(epsilon: float, s: float, m: float) -> bool:
    """True when short-blend's gross return ``1 - eps*s + (1+eps)*m`` is positive."""
    return 1.0 - epsilon * s + (1.0 + epsilon) * m > 0.0


class Blend:
    def __init__(self, epsilon: float):
        blend_move(epsilon, [1.0])
        self.epsilon = float(epsilon)

    def __call__(self, view: RoundView) -> np.ndarray:
        return blend_move(self.epsilon, view.g)

    def weight_path(self, g: np.ndarray) -> np.ndarray:
        h = self.epsilon * np.array(g, dtype=float, ndmin=1)
        h[..., 0] += 1.0 - self.epsilon
        return h

    def gross_path(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        return _gross_rows(self.weight_path(g), x)

    def __repr__(self) -> str:
        return f"Blend({self.epsilon!r})"


class ShortBlend:
    def __init__(self, epsilon: float):
        short_blend_move(epsilon, [1.0])
        self.epsilon = float(epsilon)

    def __call__(self, view: RoundView) -> np.ndarray:
        return short_blend_move(self.epsilon, view.g)

    def weight_path(self, g: np.ndarray) -> np.ndarray:
        h = -self.epsilon * np.array(g, dtype=float, ndmin=1)
        h[..., 0] += 1.0 + self.epsilon
        return h

    def gross_path(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        return _gross_rows(self.weight_path(g), x)

    def __repr__(self) -> str:
        return f"ShortBlend({self.epsilon!r})"


class HoldIndexSpeculator(HoldIndex):
    def gross_path(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        return 1.0 + x[:, 0]


class Split:
    """Several independent accounts holding fixed initial fractions of capital.

    The emitted weights are the capital-weighted average of the children's
    moves, which makes the combined ledger equal ``sum_j w_j * H_j``.
    """

    def __init__(self, children: Sequence[tuple[float, object]]):
        weights = [float(w) for w, _ in children]
        if not children or any(not w > 0 for w in weights):
            raise CAPGameError("split weights must be positive")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise CAPGameError(f"split weights must sum to 1, got {math.fsum(weights)!r}")
        self.children = [(w, c) for w, (_, c) in zip(weights, children)]
        self.reset()

    def reset(self) -> None:
        self._capitals = [1.0] * len(self.children)
        self._pending: list[np.ndarray] | None = None
        self._seen = 0
        for _, child in self.children:
            if hasattr(child, "reset"):
                child.reset()

    @property
    def child_capitals(self) -> list[float]:
        return list(self._capitals)

    def __call__(self, view: RoundView) -> np.ndarray:
        if len(view.history) < self._seen:
            self.reset()
        if self._pending is not None and len(view.history) > self._seen:
            x = view.history[-1][1]
            self._capitals = [
                c * math.fsum((h * (1.0 + x)).tolist()) for c, h in zip(self._capitals, self._pending)
            ]
        self._seen = len(view.history)
        moves = [np.asarray(child(view), dtype=float) for _, child in self.children]
        self._pending = moves
        held = [w * c for (w, _), c in zip(self.children, self._capitals)]
        total = math.fsum(held)
        if total <= 0.0:
            return index_weights(view.config.width)
        return sum(c * h for c, h in zip(held, moves)) / total

    def capital_path(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        return sum(w * np.cumprod(child.gross_path(g, x)) for w, child in self.children)

    def gross_path(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        path = self.capital_path(g, x)
        prev = np.concatenate([[1.0], path[:-1]])
        return np.divide(path, prev, out=np.ones_like(path), where=prev != 0.0)

    def __repr__(self) -> str:
        return f"Split({self.children!r})"


def split_capital(children: Sequence[tuple[float, object]]) -> Split:
    return Split(children)


# -- Market ----------------------------------------------------------------


def correlation_factor(corr) -> np.ndarray:
    """Matrix ``L`` with ``L @ L.T == corr``; rejects non-PSD input."""
    c = np.atleast_2d(np.asarray(corr, dtype=float))
    if c.shape[0] != c.shape[1]:
        raise InvalidConfigError("correlation matrix must be square")
    if not np.allclose(c, c.T, atol=1e-12):
        raise InvalidConfigError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(c), 1.0, atol=1e-12):
        raise InvalidConfigError("correlation matrix must have unit diagonal")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(c)
        if vals.min() < -1e-10:
            raise InvalidConfigError(f"correlation matrix is not PSD (min eigenvalue {vals.min():.3g})") from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def uniform_correlation(width: int, rho: float) -> np.ndarray:
    c = np.full((width, width), float(rho))
    np.fill_diagonal(c, 1.0)
    return c


def standard_noise(seed, rounds: int, width: int) -> np.ndarray:
    """Independent standard normals, ``(rounds, width)``, from a seeded generator."""
    return np.random.default_rng(seed).standard_normal((rounds, width))


def coarsen_noise(z: np.ndarray, factor: int) -> np.ndarray:
    """Aggregate a fine Brownian increment path to a coarser step.

    Block sums of ``factor`` consecutive rows, rescaled to unit variance,
    so paths at different ``dt`` share the same driving Brownian motion.
    """
    if factor < 1 or z.shape[0] % factor:
        raise CAPGameError(f"cannot coarsen {z.shape[0]} rounds by {factor}")
    return z.reshape(-1, factor, z.shape[1]).sum(axis=1) / math.sqrt(factor)


class _PathMarket:
    """Shared plumbing: generate the full path on the first round, then
    replay it row by row."""

    def reset(self) -> None:
        self._path = None

    def returns(self, config: GameConfig) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, view: RoundView) -> np.ndarray:
        if view.round == 1 or getattr(self, "_path", None) is None:
            self._path = self.returns(view.config)
        return self._path[view.round - 1]


class GBMMarket(_PathMarket):
    """Correlated geometric Brownian motion, Euler-discretised in simple
    returns: ``x = mu*dt + sigma*sqrt(dt)*Z``."""

    def __init__(self, mu, sigma, corr=None, seed=0):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if self.mu.shape != self.sigma.shape:
            raise InvalidConfigError("mu and sigma must have the same length")
        if np.any(self.sigma < 0):
            raise InvalidConfigError("sigma must be nonnegative")
        width = self.mu.size
        if corr is None:
            corr = np.eye(width)
        elif np.ndim(corr) == 0:
            corr = uniform_correlation(width, float(corr))
        self.corr = np.asarray(corr, dtype=float)
        if self.corr.shape != (width, width):
            raise InvalidConfigError(f"correlation must be {width}x{width}")
        self.factor = correlation_factor(self.corr)
        self.seed = seed
        self.clamp_count = 0
        self.reset()

    @property
    def width(self) -> int:
        return self.mu.size

    def noise(self, config: GameConfig) -> np.ndarray:
        return standard_noise(self.seed, config.num_rounds, self.width)

    def returns(self, config: GameConfig, noise: np.ndarray | None = None) -> np.ndarray:
        if config.width != self.width:
            raise InvalidConfigError(f"market has {self.width} securities, game has {config.width}")
        z = self.noise(config) if noise is None else noise
        x = self.mu * config.dt + self.sigma * math.sqrt(config.dt) * (z @ self.factor.T)
        low = x <= CLAMP_FLOOR
        self.clamp_count = int(np.count_nonzero(low))
        if self.clamp_count:
            x[low] = CLAMP_FLOOR
        return x


def gbm_returns(model: GBMMarket, config: GameConfig, seed=None) -> Iterator[np.ndarray]:
    """Yield one return vector per round of a seeded GBM path."""
    if seed is not None:
        model = GBMMarket(model.mu, model.sigma, model.corr, seed)
    yield from model.returns(config)


class DeterministicMarket(_PathMarket):
    """Replay a fixed list of return vectors; exhausts after the last row."""

    def __init__(self, rows):
        arr = np.array(rows, dtype=float, ndmin=2)
        for r in arr:
            as_returns(r)
        self.rows = arr
        self.clamp_count = 0
        self.reset()

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def returns(self, config: GameConfig) -> np.ndarray:
        if config.num_rounds > self.rows.shape[0]:
            raise CAPGameError(f"market path has {self.rows.shape[0]} rounds, game needs {config.num_rounds}")
        if config.width != self.width:
            raise InvalidConfigError(f"market has {self.width} securities, game has {config.width}")
        return self.rows[: config.num_rounds].copy()

    def __iter__(self):
        return iter(self.rows)


class AlternatingMarket(_PathMarket):
    """Adversarial rule: every security moves by ``+-amplitude`` each round,
    security k on round n getting sign ``(-1)**(n + k)``.  The index and the
    odd securities move in opposite directions, which maximises
    ``sigma_{s-m}`` for a fixed return magnitude."""

    def __init__(self, amplitude: float, width: int):
        if not 0.0 <= amplitude < 1.0:
            raise InvalidConfigError("amplitude must lie in [0, 1)")
        self.amplitude = float(amplitude)
        self._width = int(width)
        self.clamp_count = 0
        self.reset()

    @property
    def width(self) -> int:
        return self._width

    def returns(self, config: GameConfig) -> np.ndarray:
        n = np.arange(1, config.num_rounds + 1)[:, None]
        k = np.arange(config.width)[None, :]
        return self.amplitude * np.where((n + k) % 2 == 0, 1.0, -1.0)


ADVERSARIAL_RULES = ("max-volatility-within-bounds", "replay")


def adversarial(rule: str, **kwargs) -> _PathMarket:
    """Named adversarial market rules."""
    if rule == "max-volatility-within-bounds":
        return AlternatingMarket(kwargs["amplitude"], kwargs["width"])
    if rule == "replay":
        return DeterministicMarket(kwargs["rows"])
    raise CAPGameError(f"unknown adversarial rule {rule!r}; choose from {ADVERSARIAL_RULES}")
