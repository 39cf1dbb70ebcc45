"""
Report Generator Module - Generates a markdown study report from test results
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from .bootstrap_did import BootstrapResult
from .cohort_tools import BalanceRow
from .events import StudyConfig
from .survival_basic import BasicFit
from .survival_robust import RobustFit

logger = logging.getLogger(__name__)


def _fmt(value) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        return "NaN" if math.isnan(value) else f"{value:.6g}"
    return str(value)


class ReportGenerator:
    """Generate a markdown report of one badge study"""

    def __init__(
        self,
        config: StudyConfig,
        result: BootstrapResult,
        title: str = "Badge Study",
        fits: Optional[dict] = None,
        balance: Optional[Sequence[BalanceRow]] = None,
    ):
        """
        Initialize report generator

        Args:
            config: study configuration the test ran with
            result: bootstrap test outcome
            title: report title, typically the badge name
            fits: optional {"null": fit, "alt": fit} of the treatment group
            balance: optional covariate balance rows
        """
        self.config = config
        self.result = result
        self.title = title
        self.fits = fits or {}
        self.balance = list(balance or [])

    def generate_header(self) -> str:
        """Generate markdown header"""
        verdict = "significant" if self.result.p_value <= 0.05 else "not significant"
        return f"""# {self.title} Report

---

## 📋 Report Overview

Bootstrap difference-in-differences test of a first-time badge introduced at
day `{self.config.tau:g}`: the effect is **{verdict}** at the 0.05 level
(p = `{self.result.p_value:.4g}`).

"""

    def generate_config_section(self) -> str:
        """Generate study configuration section"""
        c = self.config
        markdown = "## ⚙️ Configuration\n\n"
        markdown += "| Property | Value |\n"
        markdown += "|----------|-------|\n"
        rows = [
            ("Badge Time (tau)", c.tau),
            ("Horizon (T)", c.horizon),
            ("Window (w)", c.window),
            ("Model", c.model.value),
            ("Rate Grid", ", ".join(f"{r:g}" for r in c.rate_grid)),
            ("Placement", c.placement.value),
            ("Follow Up", c.follow_up.value),
            ("Seed", c.seed),
        ]
        for name, value in rows:
            markdown += f"| {name} | `{_fmt(value)}` |\n"
        markdown += "\n"
        return markdown

    def generate_test_section(self) -> str:
        """Generate test statistic section"""
        r = self.result
        markdown = "## 📊 Test Result\n\n"
        markdown += "| Property | Value |\n"
        markdown += "|----------|-------|\n"
        markdown += f"| Treatment LLR | `{_fmt(r.llr_treatment)}` |\n"
        markdown += f"| p-value | `{_fmt(r.p_value)}` |\n"
        markdown += f"| Treatment Users | `{r.treatment_size}` |\n"
        markdown += f"| Control Groups Used | `{r.n_controls_used}` |\n"
        markdown += f"| Control Groups Dropped | `{r.n_controls_dropped}` |\n"
        if r.rate is not None:
            markdown += f"| Rate (r) | `{_fmt(r.rate)}` |\n"
        markdown += "\n"
        return markdown

    def generate_control_section(self) -> str:
        """Generate control LLR distribution section"""
        llrs = np.asarray(self.result.llr_controls, dtype=float)
        markdown = "## 🎯 Control LLR Distribution\n\n"
        if len(llrs) == 0:
            markdown += "⚠️ No usable control groups\n\n"
            return markdown
        markdown += "| Quantile | LLR |\n"
        markdown += "|----------|-----|\n"
        for q in (0.05, 0.25, 0.5, 0.75, 0.95):
            markdown += f"| {q:.0%} | `{_fmt(float(np.quantile(llrs, q)))}` |\n"
        share = float(self.result.ecdf(self.result.llr_treatment))
        markdown += f"\nECDF at the treatment LLR: `{share:.4f}`\n\n"
        return markdown

    def generate_fit_section(self) -> str:
        """Generate treatment-group fit section"""
        if not self.fits:
            return ""
        markdown = "## 🔧 Treatment Group Fits\n\n"
        markdown += "| Model | Parameter | Value |\n"
        markdown += "|-------|-----------|-------|\n"
        for label, fit in self.fits.items():
            if isinstance(fit, BasicFit):
                params = [("lambda0", fit.lambda0), ("lambda1", fit.lambda1),
                          ("loglik", fit.loglik), ("mean time change", fit.mean_time_change)]
            elif isinstance(fit, RobustFit):
                params = [("k0", fit.k0), ("k1", fit.k1), ("r", fit.r), ("loglik", fit.loglik)]
            else:
                logger.debug("skipping unknown fit type %s", type(fit).__name__)
                continue
            for name, value in params:
                markdown += f"| {label} | {name} | `{_fmt(value)}` |\n"
            for warning in getattr(fit, "warnings", ()):
                markdown += f"| {label} | ⚠️ warning | {warning} |\n"
        markdown += "\n"
        return markdown

    def generate_balance_section(self) -> str:
        """Generate covariate balance section"""
        if not self.balance:
            return ""
        markdown = "## ⚖️ Covariate Balance\n\n"
        markdown += "| Covariate | Mean SMD | SD SMD | Balanced |\n"
        markdown += "|-----------|----------|--------|----------|\n"
        for row in self.balance:
            mark = "✅" if row.balanced else "❌"
            markdown += f"| {row.covariate} | `{_fmt(row.mean_smd)}` | `{_fmt(row.sd_smd)}` | {mark} |\n"
        markdown += "\n"
        return markdown

    def generate_full_markdown(self) -> str:
        """
        Generate complete markdown report

        Returns:
            Complete markdown string
        """
        markdown = self.generate_header()
        markdown += self.generate_config_section()
        markdown += self.generate_test_section()
        markdown += self.generate_control_section()
        markdown += self.generate_fit_section()
        markdown += self.generate_balance_section()
        return markdown

    def save_to_file(self, filepath: str) -> bool:
        """
        Save markdown report to file

        Args:
            filepath: Path to save the markdown file

        Returns:
            True if successful, False otherwise
        """
        try:
            with open(filepath, "w", encoding="utf-8", newline="\n") as f:
                f.write(self.generate_full_markdown())
            return True
        except OSError as e:
            logger.error("error saving markdown: %s", e)
            return False
