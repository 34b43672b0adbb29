"""Minimum relative-entropy noise steering for discrete-time stochastic systems.

Bridges between state distributions, optimal Gaussian noise strategies,
an entropy-theoretic robustness index, and exact finite-chain oracles.
"""

from .bridge import (
    BridgeSolution,
    NoiseStrategy,
    feasible_strategy,
    inf_horizon_supply,
    lower_bound,
    min_supply,
    optimal_strategy,
    path_supply,
    push_forward,
    strategy_supply,
)
from .chain_oracle import (
    FiniteChainModel,
    StrategyTable,
    balance_terms,
    invariant_dist,
    load_chain_model,
    markovize,
    min_supply_steps,
    nominal_kernel,
    one_step_min_supply,
    propagate,
    supply,
)
from .entropy import (
    FiniteDist,
    FiniteJoint,
    GaussianDist,
    finite_cond_relent,
    finite_relent,
    gauss_relent,
)
from .matgauss import (
    GramianSet,
    LinearSystem,
    dlyap_inf,
    gramians,
    riccati_closed_form,
    sqrt_psd,
    sym_eig,
)
from .mc import MomentReport, SimConfig, normal_stream, simulate
from .robustness import (
    RobustnessProblem,
    RobustnessSolution,
    jtilde,
    robustness_index,
    sigma_func,
    solve_sigma,
    z_1d,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeSolution",
    "FiniteChainModel",
    "FiniteDist",
    "FiniteJoint",
    "GaussianDist",
    "GramianSet",
    "LinearSystem",
    "MomentReport",
    "NoiseStrategy",
    "RobustnessProblem",
    "RobustnessSolution",
    "SimConfig",
    "StrategyTable",
    "balance_terms",
    "dlyap_inf",
    "feasible_strategy",
    "finite_cond_relent",
    "finite_relent",
    "gauss_relent",
    "gramians",
    "inf_horizon_supply",
    "invariant_dist",
    "jtilde",
    "load_chain_model",
    "lower_bound",
    "markovize",
    "min_supply",
    "min_supply_steps",
    "nominal_kernel",
    "normal_stream",
    "one_step_min_supply",
    "optimal_strategy",
    "path_supply",
    "propagate",
    "push_forward",
    "riccati_closed_form",
    "robustness_index",
    "sigma_func",
    "simulate",
    "solve_sigma",
    "sqrt_psd",
    "strategy_supply",
    "supply",
    "sym_eig",
    "z_1d",
]
