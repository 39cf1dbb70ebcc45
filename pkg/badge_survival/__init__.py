"""
Badge Survival - survival-analysis tests of first-time badge effects

包含模型擬合、自助差異中的差異檢驗、合成數據和反事實模擬功能
"""

__version__ = "1.0.0"
__author__ = "Test Tool Team"

from .errors import BadgeSurvivalError, ConfigError, DataError, FitError
from .events import (
    CENSORED,
    Cohort,
    EventRecord,
    FollowUp,
    ModelKind,
    Placement,
    StudyConfig,
    exposure_segments,
    validate_dataset,
)
from .survival_basic import BasicFit, fit_alt_basic, fit_null_basic, llr_basic, wilks_pvalue
from .survival_robust import RobustFit, fit_alt_robust, fit_null_robust, llr_robust, select_rate_cv
from .bootstrap_did import BootstrapResult, VirtualBadgeSchedule, bootstrap_test, place_virtual_badges
from .study import BadgeStudy
from .result_manager import ResultManager
from .report_generator import ReportGenerator

__all__ = [
    "BadgeSurvivalError",
    "ConfigError",
    "DataError",
    "FitError",
    "CENSORED",
    "Cohort",
    "EventRecord",
    "FollowUp",
    "ModelKind",
    "Placement",
    "StudyConfig",
    "exposure_segments",
    "validate_dataset",
    "BasicFit",
    "fit_alt_basic",
    "fit_null_basic",
    "llr_basic",
    "wilks_pvalue",
    "RobustFit",
    "fit_alt_robust",
    "fit_null_robust",
    "llr_robust",
    "select_rate_cv",
    "BootstrapResult",
    "VirtualBadgeSchedule",
    "bootstrap_test",
    "place_virtual_badges",
    "BadgeStudy",
    "ResultManager",
    "ReportGenerator",
]
