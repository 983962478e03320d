"""Pilot-wave trajectory laboratory.

Closed-form wavefunction models, adaptive guidance-flow integration,
equilibrium sampling with equivariance checks, ensemble-vs-trial averages
with an empty-wave detection rule, and ergodicity diagnostics.
"""

from .wavemodels import (
    DEFAULT_NODE_EPS,
    Configuration,
    DoubleSlitState,
    GaussianPacket1D,
    NodeProximityError,
    OscillatorSuperposition2D,
    PhysicalConstants,
    TwoParticleEntangledState,
    amplitude,
    density,
    velocity,
    width,
)
from .dynamics import (
    EnsembleResult,
    IntegratorConfig,
    StepCollapseError,
    Trajectory,
    flow_ensemble,
    integrate_trajectory,
)
from .equilibrium import (
    EnvelopeFailure,
    EquivarianceResult,
    SampleSet,
    equivariance_distance,
    sample_initial,
    sample_initial_constrained_sum,
)
from .averages import (
    AverageReport,
    Coordinate,
    CoordinateSquared,
    DetectionSetup,
    Detector,
    DifferenceSquared,
    JointIndicator,
    SumCoordinates,
    TrialFailure,
    compare_averages,
    space_average,
    time_average_trials,
)
from .ergodicity import (
    CoverageGrid,
    DegenerateFrequencies,
    ErgodicReport,
    coverage_fraction,
    cross_term_residual,
    recurrence_metric,
    time_averaged_density,
)

__version__ = "0.1.0"
