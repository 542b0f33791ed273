"""Whole-play drivers behind the CLI: one simulated or observed play, the
witness-implication sweep, and the dt convergence sweep."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from capgame.bounds import (
    SANDWICH_ATOL,
    blend_label,
    optimal_lower_bound,
    optimal_upper_bound,
    p2_slacks,
    prop1_lower_bound,
    prop1_upper_bound,
    prop2_sandwich,
    short_blend_label,
    split_label,
    verify_witness_lower,
    verify_witness_split,
    verify_witness_upper,
    witness_speculators,
)
from capgame.errors import CAPGameError
from capgame.protocol import GameConfig, Play, play_batch
from capgame.strategies import AlternatingMarket, DeterministicMarket, GBMMarket, coarsen_noise, standard_noise

DEFAULT_EPSILONS = (0.01, 0.1, 0.3)
DEFAULT_ALPHAS = (0.5, 0.1, 0.01)
THREADS_ENV = "CAPM_GAME_THREADS"


@dataclass(frozen=True)
class MarketSpec:
    """Picklable description of a market, rebuilt inside worker processes."""

    kind: str  # gbm | alternating | replay
    mu: tuple[float, ...] = ()
    sigma: tuple[float, ...] = ()
    corr: tuple[tuple[float, ...], ...] | float | None = None
    amplitude: float = 0.0
    width: int = 2
    rows: tuple[tuple[float, ...], ...] = ()

    def build(self, seed=None):
        if self.kind == "gbm":
            corr = self.corr if not isinstance(self.corr, tuple) else np.array(self.corr)
            return GBMMarket(self.mu, self.sigma, corr, seed=seed)
        if self.kind == "alternating":
            return AlternatingMarket(self.amplitude, self.width)
        if self.kind == "replay":
            return DeterministicMarket(np.array(self.rows))
        raise CAPGameError(f"unknown market kind {self.kind!r}")


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(trial)])


def play_market(
    config: GameConfig,
    investor,
    market,
    epsilons=(),
    keep_paths: bool = False,
    returns: np.ndarray | None = None,
) -> Play:
    """Generate (or take) the return path and evaluate it with witness ledgers."""
    x = market.returns(config) if returns is None else returns
    g = investor.weight_path(x)
    play = play_batch(config, g, x, witness_speculators(epsilons), keep_paths=keep_paths)
    play.clamp_count = getattr(market, "clamp_count", 0)
    return play


def play_report(play: Play, alpha: float, epsilon: float) -> dict:
    """Statistics, residuals, bounds and verdicts of one play as plain data."""
    s = play.summary
    eps_up, upper = optimal_upper_bound(s, alpha)
    eps_lo, lower = optimal_lower_bound(s, alpha)
    lower_gap, upper_gap = prop2_sandwich(s)
    lower_slack, upper_slack = p2_slacks(s)

    witness = {"epsilon": epsilon, "alpha": alpha}
    witness["upper_bound"] = prop1_upper_bound(s, epsilon, alpha)
    witness["verdict_upper"] = verify_witness_upper(play, epsilon, alpha)
    witness["blend_ratio"] = play.speculator_capitals[blend_label(epsilon)] / play.index_capital
    if epsilon < 1.0 / 3.0:
        witness["lower_bound"] = prop1_lower_bound(s, epsilon, alpha)
        witness["verdict_lower"] = verify_witness_lower(play, epsilon, alpha)
        witness["verdict_split"] = verify_witness_split(play, epsilon, alpha)
        witness["short_blend_ratio"] = play.speculator_capitals[short_blend_label(epsilon)] / play.index_capital
        witness["split_ratio"] = play.speculator_capitals[split_label(epsilon)] / play.index_capital
        witness["short_blend_guard_ok"] = play.speculator_min_gross[short_blend_label(epsilon)] > 0.0
    witness["optimal_upper_verdict"] = verify_witness_upper(play, eps_up, alpha)
    witness["optimal_lower_verdict"] = verify_witness_lower(play, eps_lo, alpha)

    diag = play.monitor.diagnostics()
    diag["clamp_count"] = play.clamp_count
    return {
        "summary": s.to_dict(),
        "capm_residual": play.capm_residual,
        "deficit_residual": play.deficit_residual,
        "prop1": {
            "alpha": alpha,
            "epsilon_upper": eps_up,
            "upper_bound": upper,
            "epsilon_lower": eps_lo,
            "lower_bound": lower,
        },
        "prop2": {
            "lower_gap": lower_gap,
            "upper_gap": upper_gap,
            "lower_slack": lower_slack,
            "upper_slack": upper_slack,
            "performance_deficit": 0.5 * s.sigma_diff_sq,
            "log_growth_gap": s.lambda_s - s.lambda_m,
        },
        "witness": witness,
        "restriction": diag,
        "capitals": {
            "investor": play.investor_capital,
            "index": play.index_capital,
            "speculators": dict(sorted(play.speculator_capitals.items())),
        },
    }


# -- witness sweep -----------------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    cases: int = 0
    upper_violations: int = 0
    lower_violations: int = 0
    split_violations: int = 0
    sandwich_violations: int = 0
    guard_triggers: int = 0
    upper_wins: int = 0
    lower_wins: int = 0
    min_upper_slack: float = math.inf
    min_lower_slack: float = math.inf
    lower_gap: float = math.nan
    upper_gap: float = math.nan
    capm_residual: float = math.nan
    deficit_residual: float = math.nan
    p2_upper_slack: float = math.nan
    max_abs_m: float = math.nan
    clamp_count: int = 0
    failures: list = field(default_factory=list)


def _run_trial(job) -> TrialResult:
    trial, seed, config, market_spec, investor, epsilons, alphas, scale = job
    market = market_spec.build(seed=trial_seed(seed, trial))
    play = play_market(config, investor, market, epsilons)
    s = play.summary
    out = TrialResult(trial=trial, clamp_count=market.clamp_count)
    out.capm_residual = play.capm_residual
    out.deficit_residual = play.deficit_residual
    out.lower_gap, out.upper_gap = prop2_sandwich(s)
    out.p2_upper_slack = p2_slacks(s)[1]
    out.max_abs_m = s.max_abs_m
    if out.lower_gap < -SANDWICH_ATOL or out.upper_gap < -SANDWICH_ATOL:
        out.sandwich_violations += 1
        out.failures.append(("sandwich", None, None))
    for eps in epsilons:
        has_lower = eps < 1.0 / 3.0
        if has_lower and play.speculator_min_gross[short_blend_label(eps)] <= 0.0:
            out.guard_triggers += 1
        for alpha in alphas:
            out.cases += 1
            target = play.index_capital / alpha
            if play.speculator_capitals[blend_label(eps)] >= target:
                out.upper_wins += 1
            else:
                slack = scale * prop1_upper_bound(s, eps, alpha) - play.capm_residual
                out.min_upper_slack = min(out.min_upper_slack, slack)
            if not verify_witness_upper(play, eps, alpha, scale):
                out.upper_violations += 1
                out.failures.append(("upper", eps, alpha))
            if not has_lower:
                continue
            if play.speculator_capitals[short_blend_label(eps)] >= target:
                out.lower_wins += 1
            else:
                slack = play.capm_residual - scale * prop1_lower_bound(s, eps, alpha)
                out.min_lower_slack = min(out.min_lower_slack, slack)
            if not verify_witness_lower(play, eps, alpha, scale):
                out.lower_violations += 1
                out.failures.append(("lower", eps, alpha))
            if not verify_witness_split(play, eps, alpha, scale):
                out.split_violations += 1
                out.failures.append(("split", eps, alpha))
    return out


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CAPGameError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass
class SweepResult:
    trials: list[TrialResult]

    @property
    def cases(self) -> int:
        return sum(t.cases for t in self.trials)

    def total(self, name: str) -> int:
        return sum(getattr(t, name) for t in self.trials)

    @property
    def violations(self) -> int:
        return sum(
            self.total(k)
            for k in ("upper_violations", "lower_violations", "split_violations", "sandwich_violations")
        )

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def tally(self) -> dict:
        return {
            "trials": len(self.trials),
            "cases": self.cases,
            "violations": self.violations,
            "upper_violations": self.total("upper_violations"),
            "lower_violations": self.total("lower_violations"),
            "split_violations": self.total("split_violations"),
            "sandwich_violations": self.total("sandwich_violations"),
            "short_blend_guard_triggers": self.total("guard_triggers"),
            "blend_beat_index": self.total("upper_wins"),
            "short_blend_beat_index": self.total("lower_wins"),
            "clamp_count": self.total("clamp_count"),
            "min_upper_slack": min(t.min_upper_slack for t in self.trials),
            "min_lower_slack": min(t.min_lower_slack for t in self.trials),
            "min_sandwich_lower_gap": min(t.lower_gap for t in self.trials),
            "min_sandwich_upper_gap": min(t.upper_gap for t in self.trials),
        }


def witness_sweep(
    trials: int,
    seed: int,
    config: GameConfig,
    market: MarketSpec,
    investor,
    epsilons=DEFAULT_EPSILONS,
    alphas=DEFAULT_ALPHAS,
    scale: float = 1.0,
    workers: int | None = None,
) -> SweepResult:
    """Run the witness implications on ``trials`` independently seeded plays."""
    jobs = [(i, seed, config, market, investor, tuple(epsilons), tuple(alphas), scale) for i in range(trials)]
    n = min(worker_count(workers), max(1, trials))
    if n == 1:
        results = [_run_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * n))))
    return SweepResult(results)


# -- convergence sweep -------------------------------------------------------

SWEEP_COLUMNS = (
    "dt",
    "N",
    "capm_residual",
    "abs_capm_residual",
    "epsilon_opt",
    "bound_opt",
    "max_abs_m",
    "max_abs_s",
    "deficit_residual",
    "sigma_diff_sq",
)


def _block_factors(dts, horizon):
    dts = [float(d) for d in dts]
    finest = min(dts)
    n_fine = round(horizon / finest)
    if not math.isclose(n_fine * finest, horizon, rel_tol=1e-9):
        raise CAPGameError(f"T={horizon} is not a whole number of rounds at dt={finest}")
    out = []
    for dt in dts:
        factor = round(dt / finest)
        if not math.isclose(factor * finest, dt, rel_tol=1e-9) or n_fine % factor:
            raise CAPGameError(f"dt={dt} is not a whole multiple of dt={finest} on horizon {horizon}")
        out.append((dt, factor, n_fine // factor))
    return finest, n_fine, out


def convergence_sweep(
    dts,
    horizon: float,
    seed: int,
    market: MarketSpec,
    investor,
    alpha: float,
) -> list[dict]:
    """One row per dt, all driven by the same Brownian path on ``[0, horizon]``."""
    if market.kind != "gbm":
        raise CAPGameError("the convergence sweep needs a gbm market")
    _, n_fine, plan = _block_factors(dts, horizon)
    gbm = market.build(seed=seed)
    fine = standard_noise(np.random.SeedSequence(int(seed)), n_fine, gbm.width)
    rows = []
    for dt, factor, n in plan:
        config = GameConfig(gbm.width - 1, n, dt)
        x = gbm.returns(config, noise=coarsen_noise(fine, factor))
        play = play_batch(config, investor.weight_path(x), x)
        s = play.summary
        eps, bound = optimal_upper_bound(s, alpha)
        rows.append(
            {
                "dt": dt,
                "N": n,
                "capm_residual": play.capm_residual,
                "abs_capm_residual": abs(play.capm_residual),
                "epsilon_opt": eps,
                "bound_opt": bound,
                "max_abs_m": s.max_abs_m,
                "max_abs_s": s.max_abs_s,
                "deficit_residual": play.deficit_residual,
                "sigma_diff_sq": s.sigma_diff_sq,
            }
        )
    return rows


__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_EPSILONS",
    "MarketSpec",
    "SweepResult",
    "TrialResult",
    "convergence_sweep",
    "play_market",
    "play_report",
    "witness_sweep",
]
