"""Consensus networks: construction, spectra, dynamics, control cost and continuum limits."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .errors import (  # noqa: E402
    LabError,
    NumericalError,
    OutputError,
    ValidationError,
)
from .network import (  # noqa: E402
    ControlPattern,
    Family,
    GridSide,
    InteriorStrip,
    NetworkModel,
    SingleNode,
    build_control,
    build_dense_periodic,
    build_fractional,
    build_grid2d,
    build_model,
    build_path,
    edge_density,
)
from .spectral import (  # noqa: E402
    GapReport,
    Spectrum,
    closed_form_dense_periodic,
    closed_form_path,
    compute_spectrum,
    fractional_exponent_fit,
    gap_report,
    gap_scaling_study,
)
from .dynamics import (  # noqa: E402
    Constant,
    ControlSignal,
    Indicator,
    InfluenceFunction,
    RationalDecay,
    Trajectory,
    disagreement,
    simulate_alignment,
    simulate_linear,
    simulate_second_order,
)
from .control import (  # noqa: E402
    ControlResult,
    FixedT,
    Given,
    Gramian,
    InitialMean,
    ScaledT,
    Zero,
    cost_proxy,
    cost_scaling_study,
    gramian,
    kalman_rank,
    steer_to_consensus,
)
from .limits import (  # noqa: E402
    Alignment,
    DistributionField,
    EmpiricalMeasure,
    FractionalPower,
    Identity,
    IndicatorBand,
    StepKernel,
    graph_limit_convergence,
    kernel_distance,
    kernel_from_model,
    meanfield_convergence,
    second_order_weak_residual,
    solve_nonlocal_diffusion,
    subordination_residual,
    to_distribution,
    to_empirical,
    wasserstein1,
)

__all__ = [
    "__version__",
    "BACKEND",
    "LabError",
    "NumericalError",
    "OutputError",
    "ValidationError",
    "ControlPattern",
    "Family",
    "GridSide",
    "InteriorStrip",
    "NetworkModel",
    "SingleNode",
    "build_control",
    "build_dense_periodic",
    "build_fractional",
    "build_grid2d",
    "build_model",
    "build_path",
    "edge_density",
    "GapReport",
    "Spectrum",
    "closed_form_dense_periodic",
    "closed_form_path",
    "compute_spectrum",
    "fractional_exponent_fit",
    "gap_report",
    "gap_scaling_study",
    "Constant",
    "ControlSignal",
    "Indicator",
    "InfluenceFunction",
    "RationalDecay",
    "Trajectory",
    "disagreement",
    "simulate_alignment",
    "simulate_linear",
    "simulate_second_order",
    "ControlResult",
    "FixedT",
    "Given",
    "Gramian",
    "InitialMean",
    "ScaledT",
    "Zero",
    "cost_proxy",
    "cost_scaling_study",
    "gramian",
    "kalman_rank",
    "steer_to_consensus",
    "Alignment",
    "DistributionField",
    "EmpiricalMeasure",
    "FractionalPower",
    "Identity",
    "IndicatorBand",
    "StepKernel",
    "graph_limit_convergence",
    "kernel_distance",
    "kernel_from_model",
    "meanfield_convergence",
    "second_order_weak_residual",
    "solve_nonlocal_diffusion",
    "subordination_residual",
    "to_distribution",
    "to_empirical",
    "wasserstein1",
]
