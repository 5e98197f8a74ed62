"""Complex-stiffness identification of human joints and fractional-order amplification design."""

__version__ = "0.1.0"

from .errors import (
    ConditioningError,
    ConfigurationError,
    DegenerateExcitationError,
    DegenerateFitError,
    DomainError,
    IncompleteGridError,
    InfeasibleDesignError,
    NumericError,
    StiffnessError,
)
from .fractional import (
    AmplifierDesign,
    LagCascade,
    build_lag_cascade,
    design_amplifier,
    design_kp,
    nominal_stiffness,
    select_fractional_order,
)
from .loop import (
    Margins,
    marginal_f_search,
    margins,
    plant_response,
    predicted_amplification,
    stability_sweep,
)
from .model import (
    CouplingConfig,
    JointParams,
    ModelKind,
    SeaModel,
    eval_coupled_stiffness,
    eval_human_stiffness,
    eval_sea,
    loss_factor_and_ratio,
    natural_frequencies,
)
from .protocol import GroundTruthSubject, TimeSeries, build_protocol, make_cohort, synthesize_experiment
from .scaling import PowerLaw, fit_power_law, geometric_average, predict_H
from .stats import Comparison, RssTable, Scope, aggregate_rss, f_critical, f_statistic
from .sysid import FitResult, FrequencySample, extract_sample, fit_model, phase_shift_stats, recover_coupled
