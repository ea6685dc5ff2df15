"""Numerical laboratory for smooth time-changes of the horocycle flow on
the modular surface SL(2,Z)\\SL(2,R).

Layers: exact 2x2 group arithmetic (lie), fundamental-domain reduction and
Haar sampling (quotient), certified Poincare-sum observables (observables),
admissible time-changes and the cocycle solver (timechange, orbit), shear
and distortion diagnostics (shear), correlation and growth statistics
(ergodic), and a deterministic experiment harness (config, cli).
"""

__version__ = "0.1.0"

from .errors import (
    AllBelowNoiseError,
    ConfigError,
    ConvergenceError,
    CutoffError,
    DegenerateFitError,
    HorolabError,
    NonAdmissibleError,
    NumericOverflowError,
    ReductionError,
)
from .lie import (
    ALG_U,
    ALG_UT,
    ALG_X,
    AlgebraElement,
    GroupElement,
    U_MAT,
    UT_MAT,
    X_MAT,
    exp_algebra,
    flow_geodesic_raw,
    flow_unipotent_raw,
    lie_bracket,
    pushforward_X_along_h,
)
from .observables import (
    BumpObservable,
    ShiftedObservable,
    SobolevSurrogate,
    directional_derivative,
    observable_eval,
    project_zero_mean,
    sobolev_surrogate,
)
from .orbit import CocycleConfig
from .quotient import (
    PointM,
    coset_equal,
    enumerate_lattice,
    haar_sample,
    height,
    reduce,
)
from .rng import SampleStreams
from .shear import (
    DiagnosticBounds,
    ShearSample,
    check_change_of_variable,
    distortion_estimate,
    ergodic_exceedance,
    shear_exceedance,
    v_shear,
)
from .timechange import (
    TimeChangeGenerator,
    admissibility_report,
    cocycle_u,
    flow_timechanged,
    invariant_measure_weight,
    tau_X,
    tau_XX,
    tau_eval,
)
from .ergodic import (
    CorrelationEstimate,
    DecayFit,
    birkhoff_integral,
    correlation,
    fit_decay_exponent,
    geodesic_average_A,
    l2_growth,
)
