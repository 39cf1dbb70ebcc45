"""
Badge Study Module - Orchestrates the analyses of one badge over one event log
"""

import logging
from typing import Any, Dict, Hashable, Iterable, List, Mapping, Optional

import numpy as np
import pandas as pd

from .bootstrap_did import (
    BootstrapResult,
    VirtualBadgeSchedule,
    bootstrap_test,
    llr_series,
    place_virtual_badges,
    resolve_rate,
    study_group,
)
from .cohort_tools import BalanceRow, GroupedFit, IntensitySeries, balance_table, fit_grouped, intensity_series
from .errors import ConfigError
from .events import Cohort, EventRecord, ModelKind, StudyConfig, validate_dataset
from .survival_basic import fit_alt_basic, fit_null_basic, llr_basic, wilks_pvalue
from .survival_robust import fit_alt_robust, fit_null_robust, llr_robust

logger = logging.getLogger(__name__)


class BadgeStudy:
    """
    Main study class: validates the events once, then runs the requested
    analyses on the validated cohort with one StudyConfig
    """

    def __init__(self, events: Iterable[EventRecord], config: StudyConfig):
        """
        Validate the events against the config

        Args:
            events: raw event records
            config: study configuration
        """
        self.config = config
        self.validation = validate_dataset(events, config)
        self.cohort: Cohort = self.validation.cohort
        self.available_analyses = self._define_analyses()
        self._rate: Optional[float] = None
        self._rate_resolved = False

    def _define_analyses(self) -> Dict[str, Dict[str, Any]]:
        """
        Define all available analyses and their details

        Returns:
            Dictionary of analyses with descriptions
        """
        return {
            "validate": {
                "description": "Validate the event log against the study horizon",
                "returns": "Kept and dropped record counts, events, censored users",
                "category": "Data",
            },
            "fit": {
                "description": "Fit the null and two-regime models on the whole cohort",
                "returns": "Null fit, alternative fit, LLR",
                "category": "Model",
            },
            "test": {
                "description": "Bootstrap difference-in-differences test of the badge effect",
                "returns": "BootstrapResult with the control LLR ECDF and p-value",
                "category": "Test",
            },
            "series": {
                "description": "Sliding-window single-regime intensity estimates",
                "returns": "IntensitySeries",
                "category": "Exploration",
            },
            "llr_series": {
                "description": "LLR against virtual badge time",
                "returns": "DataFrame of tau, llr, role, n_users",
                "category": "Exploration",
            },
            "balance": {
                "description": "Covariate balance between treatment and control groups",
                "returns": "BalanceRow per covariate",
                "category": "Test",
            },
            "grouped": {
                "description": "Two-regime fit per user group",
                "returns": "GroupedFit per group",
                "category": "Model",
            },
        }

    def list_available_analyses(self) -> Dict[str, Dict[str, Any]]:
        return self.available_analyses

    @property
    def rate(self) -> Optional[float]:
        """Rate shared by every robust fit of this study, resolved once"""
        if not self._rate_resolved:
            self._rate = resolve_rate(self.cohort, self.config)
            self._rate_resolved = True
        return self._rate

    def validate(self) -> Dict[str, Any]:
        """Summary of the validated cohort"""
        cohort = self.cohort
        return {
            "n_users": len(cohort),
            "n_dropped": self.validation.n_dropped,
            "dropped": dict(self.validation.dropped),
            "n_events": int(np.count_nonzero(cohort.observed)),
            "n_censored": int(np.count_nonzero(~cohort.observed)),
            "n_treatment": len(cohort.window(self.config.tau, self.config.window)),
            "horizon": cohort.horizon,
        }

    def fit(self, model: Optional[ModelKind] = None, treatment_only: bool = False) -> Dict[str, Any]:
        """
        Fit both models of the chosen kind

        Args:
            model: defaults to the configured model
            treatment_only: fit the treatment group the bootstrap test scores
                instead of the whole cohort

        Returns:
            {"model", "null", "alt", "llr"}; the basic model adds the Wilks p-value
        """
        model = ModelKind(model or self.config.model)
        tau = self.config.tau
        cohort = study_group(self.cohort, tau, self.config) if treatment_only else self.cohort
        if model is ModelKind.ROBUST:
            rate = self.rate if self.config.model is ModelKind.ROBUST else self.config.rate_grid[0]
            return {
                "model": model,
                "null": fit_null_robust(cohort, rate, tau),
                "alt": fit_alt_robust(cohort, tau, rate),
                "llr": llr_robust(cohort, tau, rate),
            }
        llr = llr_basic(cohort, tau)
        return {
            "model": model,
            "null": fit_null_basic(cohort),
            "alt": fit_alt_basic(cohort, tau),
            "llr": llr,
            "wilks_p": wilks_pvalue(llr),
        }

    def schedule(self) -> VirtualBadgeSchedule:
        c = self.config
        return place_virtual_badges(c.horizon, c.tau, c.window, c.n_controls, c.placement, c.seed, c.stride)

    def test(self, schedule: Optional[VirtualBadgeSchedule] = None) -> BootstrapResult:
        return bootstrap_test(self.cohort, self.config, schedule)

    def series(self) -> IntensitySeries:
        c = self.config
        return intensity_series(self.cohort, c.tau, c.window, c.model, self.rate, c.stride)

    def llr_series(self) -> pd.DataFrame:
        return llr_series(self.cohort, self.config)

    def balance(self, covariates: pd.DataFrame,
                schedule: Optional[VirtualBadgeSchedule] = None) -> List[BalanceRow]:
        c = self.config
        return balance_table(covariates, self.cohort, c.tau, c.window, schedule or self.schedule())

    def grouped(self, labels: Mapping[Hashable, Hashable]) -> List[GroupedFit]:
        """
        Args:
            labels: user_id -> group; users without a label are left out
        """
        user_labels = pd.Series(list(self.cohort.user_ids)).map(dict(labels))
        groups = {}
        for group in sorted(user_labels.dropna().unique(), key=str):
            groups[group] = self.cohort.select((user_labels == group).to_numpy())
        missing = int(user_labels.isna().sum())
        if missing:
            logger.warning("%d user(s) have no group label and were left out", missing)
        return fit_grouped(groups, self.config.tau, self.config.model, self.rate)

    def run_analysis(self, name: str, **kwargs) -> Any:
        """
        Run one analysis by name

        Args:
            name: one of list_available_analyses()
        """
        methods = {
            "validate": self.validate,
            "fit": self.fit,
            "test": self.test,
            "series": self.series,
            "llr_series": self.llr_series,
            "balance": self.balance,
            "grouped": self.grouped,
        }
        if name not in methods:
            raise ConfigError(f"Unknown analysis: {name}")
        logger.info("running %s", name)
        return methods[name](**kwargs)
