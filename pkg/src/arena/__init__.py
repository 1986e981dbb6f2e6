"""Divisible-resource allocation mechanisms, equilibria, and liquid welfare bounds."""

from .constructions import ConstructionReport, budget_aware_games, pys_envelope, theorem1_games
from .equilibrium import (
    EquilibriumResult,
    best_response,
    classify_players,
    default_inits,
    feasible_signal_bound,
    find_equilibrium,
    verify_equilibrium,
)
from .games import (
    INF,
    Game,
    Player,
    Valuation,
    dump_game,
    game_from_dict,
    game_to_dict,
    liquid_welfare,
    load_game,
    optimal_liquid_welfare,
    social_welfare,
    utility,
)
from .lpoa import (
    AffinizedGame,
    DegeneratePointError,
    DeltaReport,
    GameLpoaResult,
    ScanResult,
    SearchConfig,
    WitnessReport,
    affinize,
    delta_diagnostic,
    game_lpoa,
    lambda_coefficient,
    lower_bound_witness,
    lpoa_upper_scan,
    master_ratio,
    ratio_grid,
)
from .mechanisms import (
    MECHANISM_NAMES,
    Mechanism,
    MechanismConstants,
    SignalDomainError,
    as_signal_vector,
    beta_equation,
    gamma_equation,
    get_mechanism,
    sh_integral,
    solve_constants,
)

__version__ = "0.1.0"
