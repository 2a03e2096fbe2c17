"""Noisy gradient descent vs tuned linear estimators on teacher-student regression."""

from .model import (
    ScheduleConfig,
    TeacherSpec,
    check_assumptions,
    eval_network,
    h_norm,
    hgamma_norm,
    sample_teacher,
    bump_teacher,
)
from .data import Dataset, generate_dataset, empirical_risk
from .ngd import NgdConfig, run_chain, mixing_diagnostic
from .linear import tune, fit_estimator, kernel_eval, knn_predict, nw_predict
from .risk import (
    RiskRecord,
    excess_risk_mc,
    rate_fit,
    linear_lower_exponent,
    linear_lower_exponents,
    nn_upper_exponent,
    dominance_condition,
)
from .lowerbound import BumpApproxConfig, build_bump_approx, gauss_bump, sup_error
from .config import ExperimentConfig, parse_config, ConfigError
from .sweep import run_sweep, report

__version__ = "0.1.0"
