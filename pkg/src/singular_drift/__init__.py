"""Optimal consumption and portfolio choice when the stock drift contains the
local time of a jump-diffusion driver and the investor sees the market with a
delay.
"""

from .config import ExperimentConfig, load_config, parse_config
from .control import (
    PolicyTrajectory,
    RootEquationCoefficients,
    constant_policy,
    consumption_star,
    delayed_conditional_delta,
    delayed_policy,
    reduced_integrand,
    root_coefficients,
    root_equation_lhs,
    solve_portfolio_many,
    solve_portfolio_star,
    write_policy_csv,
)
from .donsker import (
    ForwardKernel,
    QuadConfig,
    conditional_density,
    delta_bm_conditional,
    delta_general_conditional,
    delta_upper_bound,
    forward_kernel,
    gauss_legendre_panels,
    gaussian_integral,
    lambda_moments,
)
from .errors import ArgumentError, ConfigError, DomainError, HypothesisViolation, UnsupportedKernelError
from .local_time import (
    LocalTimeTrajectory,
    band_epsilon,
    band_occupation_local_time,
    expected_local_time,
    expected_local_time_curve,
    write_local_time_csv,
)
from .market import (
    DriverSpec,
    LevyMeasure,
    MarketParams,
    PiecewiseConstant,
    UtilityWeights,
    ValidationReport,
    brownian_driver,
    levy_integral,
    validate_market,
)
from .paths import (
    PathEnsemble,
    SampleStats,
    TimeGrid,
    iter_path_blocks,
    map_path_blocks,
    sample_statistics,
    simulate_paths,
    write_jumps_csv,
    write_paths_csv,
)
from .performance import (
    PerfReport,
    SweepRow,
    blowup_constant,
    closed_form_J_hat,
    evaluate_J,
    evaluate_wealth_J,
    gaussian_sq_exp_moment,
    second_moment_R,
    simulate_wealth,
    theta_sweep,
    variant_discrepancy,
    wealth_objective,
    write_sweep_csv,
)

__version__ = "0.1.0"
