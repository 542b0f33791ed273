"""The Basic CAP protocol as a turn-based game engine.

Each round Investor picks weights ``g``, every Speculator account picks
weights ``h``, then Market picks the return vector ``x``.  Security 0 is the
market index.  Three kinds of capital are tracked: Investor's, the index's
(one unit held in security 0) and one ledger per named Speculator account.

Two routes produce the same ledgers:

* :func:`step` / :func:`run_game` play round by round with arbitrary
  strategies that may look at the full history.
* :func:`play_batch` takes a whole return path and evaluates the
  ledgers with numpy; used for long Monte Carlo sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from capgame.errors import (
    InvalidConfigError,
    InvalidReturnsError,
    InvalidWeightsError,
    InvestorBankruptError,
    SpeculatorBankruptError,
)
from capgame.moments import (
    MomentAccumulator,
    MomentSummary,
    capm_residual,
    deficit_residual,
)

WEIGHT_ATOL = 1e-12
DEFAULT_SPECULATOR = "speculator"


@dataclass(frozen=True)
class GameConfig:
    """K non-index securities, N rounds of length dt."""

    num_securities: int
    num_rounds: int
    dt: float

    def __post_init__(self):
        if int(self.num_securities) != self.num_securities or self.num_securities < 1:
            raise InvalidConfigError(f"num_securities must be an integer >= 1, got {self.num_securities!r}")
        if int(self.num_rounds) != self.num_rounds or self.num_rounds < 1:
            raise InvalidConfigError(f"num_rounds must be an integer >= 1, got {self.num_rounds!r}")
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise InvalidConfigError(f"dt must be a positive finite number, got {self.dt!r}")

    @property
    def horizon(self) -> float:
        return self.num_rounds * self.dt

    @property
    def width(self) -> int:
        """Number of securities including the index, K + 1."""
        return self.num_securities + 1


def as_weights(w, width: int | None = None) -> np.ndarray:
    """Validate a capital allocation; renormalise if the sum is within 1e-12 of 1."""
    arr = np.array(w, dtype=float).ravel()
    if width is not None and arr.size != width:
        raise InvalidWeightsError(f"expected {width} weights, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidWeightsError("weights must be finite")
    total = math.fsum(arr.tolist())
    if abs(total - 1.0) > WEIGHT_ATOL:
        raise InvalidWeightsError(f"weights must sum to 1, got {total!r}")
    if total != 1.0:
        arr = arr / total
    arr.flags.writeable = False
    return arr


def as_returns(x, width: int | None = None) -> np.ndarray:
    """Validate one round of simple returns; each must exceed -1."""
    arr = np.array(x, dtype=float).ravel()
    if width is not None and arr.size != width:
        raise InvalidReturnsError(f"expected {width} returns, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidReturnsError("returns must be finite")
    if np.any(arr <= -1.0):
        raise InvalidReturnsError(f"returns must exceed -1, got {arr.tolist()}")
    arr.flags.writeable = False
    return arr


def index_weights(width: int) -> np.ndarray:
    e0 = np.zeros(width)
    e0[0] = 1.0
    return e0


@dataclass
class RestrictionMonitor:
    """Tracks how far a play is from the continuity restriction.

    The restriction is reported, never enforced.
    """

    dt: float
    max_abs_s_limit: float = 0.1
    max_abs_m_limit: float = 0.1
    sigma_sq_limit: float = 100.0
    n: int = 0
    max_abs_s: float = 0.0
    max_abs_m: float = 0.0
    sum_s2: float = 0.0
    sum_m2: float = 0.0

    def observe(self, s: float, m: float) -> None:
        self.n += 1
        self.max_abs_s = max(self.max_abs_s, abs(s))
        self.max_abs_m = max(self.max_abs_m, abs(m))
        self.sum_s2 += s * s
        self.sum_m2 += m * m

    def observe_many(self, s: np.ndarray, m: np.ndarray) -> None:
        if s.size == 0:
            return
        self.n += s.size
        self.max_abs_s = max(self.max_abs_s, float(np.max(np.abs(s))))
        self.max_abs_m = max(self.max_abs_m, float(np.max(np.abs(m))))
        self.sum_s2 += float(np.dot(s, s))
        self.sum_m2 += float(np.dot(m, m))

    @property
    def sigma_s_sq(self) -> float:
        return self.sum_s2 / (self.n * self.dt) if self.n else 0.0

    @property
    def sigma_m_sq(self) -> float:
        return self.sum_m2 / (self.n * self.dt) if self.n else 0.0

    def violations(self) -> list[str]:
        out = []
        if self.max_abs_s > self.max_abs_s_limit:
            out.append(f"max|s_n| = {self.max_abs_s:.6g} exceeds {self.max_abs_s_limit:g}")
        if self.max_abs_m > self.max_abs_m_limit:
            out.append(f"max|m_n| = {self.max_abs_m:.6g} exceeds {self.max_abs_m_limit:g}")
        if self.sigma_s_sq > self.sigma_sq_limit:
            out.append(f"sigma_s^2 = {self.sigma_s_sq:.6g} exceeds {self.sigma_sq_limit:g}")
        if self.sigma_m_sq > self.sigma_sq_limit:
            out.append(f"sigma_m^2 = {self.sigma_m_sq:.6g} exceeds {self.sigma_sq_limit:g}")
        return out

    def diagnostics(self) -> dict:
        T = self.n * self.dt
        return {
            "max_abs_s": self.max_abs_s,
            "max_abs_m": self.max_abs_m,
            "sigma_s_sq": self.sigma_s_sq,
            "sigma_m_sq": self.sigma_m_sq,
            "log_T": math.log(T) if T > 0 else None,
            "inv_sqrt_dt": self.dt**-0.5,
            "log_T_within_inv_sqrt_dt": (math.log(T) <= self.dt**-0.5) if T > 0 else None,
            "violations": self.violations(),
        }


@dataclass
class GameState:
    """Round counter, the capital ledgers and the recorded path.

    ``history`` holds ``(g_n, x_n)`` pairs only; Speculator moves are not
    part of the sample space.  :func:`step` advances a state in place.
    """

    config: GameConfig
    round: int = 0
    investor_capital: float = 1.0
    index_capital: float = 1.0
    speculator_capitals: dict[str, float] = field(default_factory=lambda: {DEFAULT_SPECULATOR: 1.0})
    history: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    monitor: RestrictionMonitor | None = None

    def __post_init__(self):
        if self.monitor is None:
            self.monitor = RestrictionMonitor(self.config.dt)

    @property
    def speculator_capital(self) -> float:
        if len(self.speculator_capitals) != 1:
            raise AttributeError("state carries several speculator ledgers; use speculator_capitals")
        return next(iter(self.speculator_capitals.values()))

    @property
    def finished(self) -> bool:
        return self.round >= self.config.num_rounds

    def returns_matrix(self) -> np.ndarray:
        return np.array([x for _, x in self.history]).reshape(-1, self.config.width)

    def weights_matrix(self) -> np.ndarray:
        return np.array([g for g, _ in self.history]).reshape(-1, self.config.width)


def new_game(config: GameConfig, speculators: Sequence[str] = (DEFAULT_SPECULATOR,)) -> GameState:
    """Round-0 state with every ledger at one monetary unit."""
    if not isinstance(config, GameConfig):
        raise InvalidConfigError("config must be a GameConfig")
    return GameState(config=config, speculator_capitals={name: 1.0 for name in speculators})


def _gross(w: np.ndarray, x: np.ndarray) -> float:
    return math.fsum((w * (1.0 + x)).tolist())


def step(state: GameState, g, h, x) -> GameState:
    """Play one round: Investor's ``g``, Speculator's ``h`` (weights or a
    mapping of account name to weights), Market's ``x``.

    Raises :class:`InvestorBankruptError` when Investor's gross return is not
    positive, and :class:`SpeculatorBankruptError` when a speculator's gross
    return is negative.  Nothing is modified when an error is raised.
    """
    cfg = state.config
    if state.finished:
        raise InvalidConfigError(f"game already finished after {cfg.num_rounds} rounds")
    width = cfg.width
    g = as_weights(g, width)
    x = as_returns(x, width)
    if not isinstance(h, Mapping):
        h = {DEFAULT_SPECULATOR: h}
    if set(h) != set(state.speculator_capitals):
        raise InvalidWeightsError(
            f"speculator moves {sorted(h)} do not match ledgers {sorted(state.speculator_capitals)}"
        )
    n = state.round + 1

    investor_gross = _gross(g, x)
    if investor_gross <= 0.0:
        raise InvestorBankruptError(f"Investor's gross return {investor_gross!r} <= 0 in round {n}")
    spec_gross = {}
    for name, w in h.items():
        w = as_weights(w, width)
        gr = _gross(w, x)
        if gr < 0.0:
            raise SpeculatorBankruptError(
                f"speculator {name!r} gross return {gr!r} < 0 in round {n}", label=name, round=n
            )
        spec_gross[name] = gr

    s = math.fsum((g * x).tolist())
    m = float(x[0])
    state.round = n
    state.investor_capital *= investor_gross
    state.index_capital *= 1.0 + m
    for name, gr in spec_gross.items():
        state.speculator_capitals[name] *= gr
    state.history.append((g, x))
    state.monitor.observe(s, m)
    return state


@dataclass
class RoundView:
    """What a player sees when it moves.

    ``g`` is Investor's move this round (None while Investor is choosing);
    ``h`` the speculators' moves (None until they have moved).
    """

    config: GameConfig
    round: int
    history: Sequence[tuple[np.ndarray, np.ndarray]]
    investor_capital: float
    index_capital: float
    g: np.ndarray | None = None
    h: Mapping[str, np.ndarray] | None = None


Strategy = Callable[[RoundView], Sequence[float]]


def run_game(
    config: GameConfig,
    investor: Strategy,
    speculator: Strategy | Mapping[str, Strategy],
    market: Strategy,
) -> tuple[GameState, MomentAccumulator]:
    """Play all N rounds in the order Investor, Speculator(s), Market.

    Later movers see earlier moves of the same round through the view.
    """
    if not isinstance(speculator, Mapping):
        speculator = {DEFAULT_SPECULATOR: speculator}
    for strategy in (investor, market, *speculator.values()):
        reset = getattr(strategy, "reset", None)
        if reset is not None:
            reset()
    state = new_game(config, tuple(speculator))
    acc = MomentAccumulator(config.dt)
    width = config.width
    for n in range(1, config.num_rounds + 1):
        view = RoundView(config, n, state.history, state.investor_capital, state.index_capital)
        view.g = as_weights(investor(view), width)
        view.h = {name: as_weights(policy(view), width) for name, policy in speculator.items()}
        x = as_returns(market(view), width)
        step(state, view.g, view.h, x)
        acc.update(math.fsum((view.g * x).tolist()), float(x[0]))
    return state, acc


@dataclass
class Play:
    """Terminal ledgers plus path statistics of one completed play."""

    config: GameConfig
    summary: MomentSummary
    investor_capital: float
    index_capital: float
    speculator_capitals: dict[str, float]
    speculator_min_gross: dict[str, float]
    monitor: RestrictionMonitor
    accumulator: MomentAccumulator | None = None
    paths: dict[str, np.ndarray] | None = None
    clamp_count: int = 0

    @property
    def capm_residual(self) -> float:
        return capm_residual(self.summary)

    @property
    def deficit_residual(self) -> float:
        return deficit_residual(self.summary)

    @classmethod
    def from_game(cls, state: GameState, acc: MomentAccumulator) -> "Play":
        return cls(
            config=state.config,
            summary=acc.summarize(),
            investor_capital=state.investor_capital,
            index_capital=state.index_capital,
            speculator_capitals=dict(state.speculator_capitals),
            speculator_min_gross={},
            monitor=state.monitor,
            accumulator=acc,
        )


def _rowdot(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", np.broadcast_to(w, x.shape), x)


def play_batch(
    config: GameConfig,
    weights: np.ndarray,
    returns: np.ndarray,
    speculators: Mapping[str, object] | None = None,
    keep_paths: bool = False,
) -> Play:
    """Evaluate a whole play from Investor's weight path and Market's returns.

    ``weights`` is ``(N, K+1)`` or a single ``(K+1,)`` row used every round.
    Speculator policies must provide ``gross_path(weights, returns)``.
    Speculator bankruptcy is recorded in ``speculator_min_gross`` instead of
    raised, so sweeps can tally it.
    """
    x = np.asarray(returns, dtype=float)
    width = config.width
    if x.shape != (config.num_rounds, width):
        raise InvalidReturnsError(f"returns must have shape {(config.num_rounds, width)}, got {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x <= -1.0):
        raise InvalidReturnsError("returns must be finite and exceed -1")
    g = np.asarray(weights, dtype=float)
    if g.ndim == 1:
        g = as_weights(g, width)
    elif g.shape != x.shape:
        raise InvalidWeightsError(f"weight path must have shape {x.shape}, got {g.shape}")
    elif np.any(np.abs(g.sum(axis=1) - 1.0) > WEIGHT_ATOL):
        raise InvalidWeightsError("every weight row must sum to 1")

    investor_gross = _rowdot(g, 1.0 + x)
    if np.any(investor_gross <= 0.0):
        n = int(np.argmax(investor_gross <= 0.0)) + 1
        raise InvestorBankruptError(f"Investor's gross return <= 0 in round {n}")
    s = _rowdot(g, x)
    m = x[:, 0].copy()

    acc = MomentAccumulator(config.dt).update_many(s, m)
    monitor = RestrictionMonitor(config.dt)
    monitor.observe_many(s, m)

    capitals: dict[str, float] = {}
    min_gross: dict[str, float] = {}
    paths: dict[str, np.ndarray] = {}
    for name, policy in (speculators or {}).items():
        gross = policy.gross_path(g, x)
        path = np.cumprod(gross)
        capitals[name] = float(path[-1])
        min_gross[name] = float(np.min(gross))
        if keep_paths:
            paths[name] = path
    if keep_paths:
        paths["investor"] = np.cumprod(investor_gross)
        paths["index"] = np.cumprod(1.0 + m)

    return Play(
        config=config,
        summary=acc.summarize(),
        investor_capital=float(np.prod(investor_gross)),
        index_capital=float(np.prod(1.0 + m)),
        speculator_capitals=capitals,
        speculator_min_gross=min_gross,
        monitor=monitor,
        accumulator=acc,
        paths=paths if keep_paths else None,
    )
