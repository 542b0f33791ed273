"""Game-theoretic CAPM: the Basic CAP protocol, its path statistics, the
speculator witness strategies and their finite-path error bounds."""
from capgame.bounds import (
    PredictionReport,
    big_gamma,
    gamma,
    predict,
    prop1_lower_bound,
    prop1_upper_bound,
    prop2_sandwich,
    verify_witness_lower,
    verify_witness_split,
    verify_witness_upper,
)
from capgame.errors import (
    CAPGameError,
    IngestError,
    InvalidConfigError,
    InvalidReturnsError,
    InvalidWeightsError,
    InvestorBankruptError,
    MissingLedgerError,
    SpeculatorBankruptError,
)
from capgame.moments import (
    MomentAccumulator,
    MomentSummary,
    capm_residual,
    deficit_residual,
    merge,
    moments_of_path,
    summarize,
    update,
)
from capgame.protocol import (
    GameConfig,
    GameState,
    Play,
    RestrictionMonitor,
    RoundView,
    new_game,
    play_batch,
    run_game,
    step,
)
from capgame.strategies import (
    AlternatingMarket,
    Blend,
    BuyAndHold,
    DeterministicMarket,
    FixedWeights,
    GBMMarket,
    HoldIndex,
    ShortBlend,
    Split,
)

__version__ = "0.1.0"
