#!/usr/bin/env python3
"""
Badge Survival Tool - Main Entry Point

Survival-analysis tests of whether a first-time badge changed when users
first perform the rewarded action, plus synthetic cohorts, power studies and
counterfactual replays.
"""

import argparse
import dataclasses
import logging
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import psutil

from badge_survival import (
    BadgeStudy,
    BadgeSurvivalError,
    ConfigError,
    ModelKind,
    ReportGenerator,
    ResultManager,
    StudyConfig,
)
from badge_survival.counterfactual import (
    ANSWER_STRATA,
    BOUNTY_STRATA,
    answer_uplift,
    answers_before_bounty_test,
    assign_buckets,
    compare_worlds,
    counterfactual_waiting_times,
    fit_bounty_model,
    observed_series,
    simulate_counterfactual_wikis,
    tag_cohorts,
)
from badge_survival.cohort_tools import balance_frame, fit_grouped, grouped_frame
from badge_survival.ingest import (
    derive_eligibility,
    eligibility_records,
    load_config_file,
    merge_reputation_logs,
    parse_actions_file,
    parse_covariates_file,
    parse_events_file,
    parse_groups_file,
    parse_questions_file,
    parse_reputation_file,
    parse_tags_file,
    write_events_file,
)
from badge_survival.synthgen import SynthSpec, default_test_configs, run_power_study, simulate_cohort

logger = logging.getLogger("badge_survival.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

STUDY_KEYS = ("tau", "horizon", "window", "model", "rate", "n_controls", "placement",
              "folds", "stride", "min_controls", "follow_up")


class ToolArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def print_banner():
    """Print application banner"""
    banner = """
╔═══════════════════════════════════════════════════════════╗
║              Badge Survival Tool v1.0.0                   ║
║     First-time badge effects from user event logs         ║
╚═══════════════════════════════════════════════════════════╝
"""
    print(banner)


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


def build_parser() -> ToolArgumentParser:
    parser = ToolArgumentParser(
        prog="main.py",
        description="Badge Survival - causal tests of first-time badges on event logs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth --tau 180 --T 360 --target-dp 0 --out events.tsv
  python main.py validate --events events.tsv --tau 180 --horizon 360
  python main.py --config study.cfg test --events events.tsv --markdown report.md
  python main.py --config study.cfg series --events events.tsv --llr
  python main.py --jobs 8 power --strengths 0,0.02,0.05 --replicates 100
  python main.py eligibility --reputation rep.tsv --threshold 75 --actions bounties.tsv --out events.tsv
  python main.py counterfactual --tags tags.tsv --tau 600 --horizon 900
  python main.py results                      # List saved run summaries
        """
    )
    parser.add_argument("--config", metavar="FILE", help="Study config file (key=value lines)")
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides the config file)")
    parser.add_argument("--output-dir", default="results", metavar="DIR",
                        help="Directory for TSV tables and JSON summaries (default: results)")
    parser.add_argument("--jobs", type=int, default=default_jobs(),
                        help="Parallel workers (default: physical cores)")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages")

    study = ToolArgumentParser(add_help=False)
    study.add_argument("--events", required=True, metavar="FILE", help="Events TSV")
    study.add_argument("--tau", type=float, help="Badge introduction time (days)")
    study.add_argument("--horizon", type=float, help="Observation horizon T (days)")
    study.add_argument("--window", type=float, help="Group window width w (days)")
    study.add_argument("--model", choices=["basic", "robust"])
    study.add_argument("--rate", help="Gamma rate r, or a comma grid chosen by cross-validation")
    study.add_argument("--n-controls", dest="n_controls", type=int)
    study.add_argument("--placement", choices=["uniform_random", "sliding_window"])
    study.add_argument("--follow-up", dest="follow_up", choices=["horizon", "window"])
    study.add_argument("--stride", type=float, help="Sliding-window step (default: w/4)")
    study.add_argument("--min-controls", dest="min_controls", type=int)

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    commands.add_parser("validate", parents=[study], help="Validate an events file")
    commands.add_parser("fit", parents=[study], help="Fit null and two-regime models")

    test = commands.add_parser("test", parents=[study], help="Bootstrap difference-in-differences test")
    test.add_argument("--covariates", metavar="FILE", help="Covariates TSV for the balance section")
    test.add_argument("--markdown", metavar="FILE", help="Write a markdown study report to FILE")

    balance = commands.add_parser("balance", parents=[study], help="Covariate balance check")
    balance.add_argument("--covariates", required=True, metavar="FILE")

    series = commands.add_parser("series", parents=[study], help="Sliding-window intensity series")
    series.add_argument("--llr", action="store_true", help="Also write LLR against virtual badge time")

    grouped = commands.add_parser("grouped", help="Two-regime fits per group")
    grouped.add_argument("--events", metavar="FILE", help="Events TSV (needs --groups)")
    grouped.add_argument("--groups", metavar="FILE", help="TSV user_id, group")
    grouped.add_argument("--tags", metavar="FILE", help="Tags TSV, grouped by popularity bucket")
    grouped.add_argument("--tau", type=float)
    grouped.add_argument("--horizon", type=float)
    grouped.add_argument("--model", choices=["basic", "robust"])
    grouped.add_argument("--rate")

    synth = commands.add_parser("synth", help="Generate a synthetic events file")
    _add_synth_arguments(synth)
    synth.add_argument("--n-users", dest="n_users", type=int, default=10_000)
    effect = synth.add_mutually_exclusive_group(required=True)
    effect.add_argument("--k1", type=float, help="Post-badge Gamma shape")
    effect.add_argument("--target-dp", dest="target_dP", type=float, help="Target E[dP] at 10 days")
    synth.add_argument("--out", metavar="FILE", help="Events TSV to write (default: OUTPUT_DIR/synth_events.tsv)")

    power = commands.add_parser("power", help="Power study of the three test methods")
    _add_synth_arguments(power)
    power.add_argument("--n-users", dest="n_users", type=int, default=10_000)
    power.add_argument("--strengths", default="0,0.02,0.05,0.1", help="Comma list of E[dP] values")
    power.add_argument("--replicates", type=int, default=100)
    power.add_argument("--n-controls", dest="n_controls", type=int, default=200)
    power.add_argument("--window", type=float, default=60.0)

    counterfactual = commands.add_parser("counterfactual", help="Replay tag wikis without the badge")
    counterfactual.add_argument("--tags", required=True, metavar="FILE")
    counterfactual.add_argument("--tau", type=float, required=True)
    counterfactual.add_argument("--horizon", type=float, required=True)
    counterfactual.add_argument("--replicates", type=int, default=100)
    counterfactual.add_argument("--grid-points", dest="grid_points", type=int, default=101)

    bounty = commands.add_parser("bounty", help="Bounty and first-answer hazards per stratum")
    bounty.add_argument("--questions", required=True, metavar="FILE")
    bounty.add_argument("--tau", type=float, required=True)
    bounty.add_argument("--horizon", type=float, required=True)

    eligibility = commands.add_parser("eligibility", help="Derive start times from reputation logs")
    eligibility.add_argument("--reputation", required=True, action="append", metavar="FILE",
                             help="Reputation TSV; repeat to merge partial logs")
    eligibility.add_argument("--threshold", type=float, required=True, help="Reputation that makes a user eligible")
    eligibility.add_argument("--actions", metavar="FILE", help="TSV user_id, time of the rewarded action")
    eligibility.add_argument("--out", metavar="FILE",
                             help="Events TSV to write (default: OUTPUT_DIR/eligibility_events.tsv)")

    results = commands.add_parser("results", help="List saved run summaries")
    results.add_argument("--limit", type=int, default=None)
    return parser


def _add_synth_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--T", type=float, default=360.0, help="Horizon (days)")
    parser.add_argument("--tau", type=float, default=None, help="Badge time (default: T/2)")
    parser.add_argument("--r", type=float, default=10.0, help="Gamma rate")
    parser.add_argument("--k0", type=float, default=0.1, help="Pre-badge Gamma shape")
    parser.add_argument("--trend-a", dest="trend_a", type=float, default=0.001, help="Linear trend slope")


def study_config(args: argparse.Namespace) -> StudyConfig:
    """Config file values overridden by command-line flags"""
    values: Dict[str, object] = load_config_file(args.config) if args.config else {}
    for key in STUDY_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if args.seed is not None:
        values["seed"] = args.seed
    values["n_jobs"] = args.jobs
    return StudyConfig.from_mapping(values)


def _fit_rows(fits: dict) -> pd.DataFrame:
    rows = []
    for label in ("null", "alt"):
        for name, value in dataclasses.asdict(fits[label]).items():
            if name != "warnings":
                rows.append((label, name, value))
    rows.append(("alt", "llr", fits["llr"]))
    if "wilks_p" in fits:
        rows.append(("alt", "wilks_p", fits["wilks_p"]))
    return pd.DataFrame(rows, columns=["fit", "parameter", "value"])


def _save_summary(manager: ResultManager, name: str, data: dict):
    saved = manager.save_result(data, name)
    if saved["status"] == "success":
        print(f"✅ Summary saved: {saved['filepath']}")
    else:
        print(f"❌ {saved['message']}")


def cmd_validate(args, manager: ResultManager) -> int:
    config = study_config(args)
    print(f"🔍 Validating {args.events}...\n")
    study = BadgeStudy(parse_events_file(args.events), config)
    summary = study.validate()
    for key, value in summary.items():
        print(f"  • {key}: {value}")
    print()
    _save_summary(manager, "validate", summary)
    return EXIT_OK


def cmd_fit(args, manager: ResultManager) -> int:
    config = study_config(args)
    study = BadgeStudy(parse_events_file(args.events), config)
    print(f"🔧 Fitting the {config.model.value} model on {len(study.cohort)} user(s)...\n")
    fits = study.fit()
    frame = _fit_rows(fits)
    for row in frame.itertuples(index=False):
        print(f"  • {row.fit:<4} {row.parameter:<15} {row.value}")
    for label in ("null", "alt"):
        for warning in fits[label].warnings:
            print(f"⚠️  {label}: {warning}")
    print()
    print(f"✅ Table saved: {manager.save_table('fit', frame)}")
    return EXIT_OK


def cmd_test(args, manager: ResultManager) -> int:
    config = study_config(args)
    study = BadgeStudy(parse_events_file(args.events), config)
    print(f"📊 Bootstrap test: tau={config.tau:g}, model={config.model.value}, "
          f"placement={config.placement.value}...\n")
    result = study.test()
    print(f"  • treatment LLR:  {result.llr_treatment:.6g} ({result.treatment_size} user(s))")
    print(f"  • control groups: {result.n_controls_used} used, {result.n_controls_dropped} dropped")
    print(f"  • p-value:        {result.p_value:.6g}")
    print()

    print(f"✅ ECDF saved: {manager.save_table('ecdf', result.to_frame())}")
    controls = pd.DataFrame({
        "tau": result.control_times,
        "n_users": result.control_sizes,
        "llr": result.llr_controls,
    })
    print(f"✅ Control groups saved: {manager.save_table('controls', controls)}")
    _save_summary(manager, "test", {"config": dataclasses.asdict(config), "result": result.summary()})

    if args.markdown:
        print(f"📝 Generating markdown report: {args.markdown}")
        balance = None
        if args.covariates:
            balance = study.balance(parse_covariates_file(args.covariates), result.schedule)
        fits = study.fit(treatment_only=True)
        generator = ReportGenerator(config, result, fits={"null": fits["null"], "alt": fits["alt"]},
                                    balance=balance)
        if generator.save_to_file(args.markdown):
            print(f"✅ Markdown report saved to: {args.markdown}")
        else:
            print("❌ Failed to save markdown report")
            return EXIT_DATA
    return EXIT_OK


def cmd_balance(args, manager: ResultManager) -> int:
    config = study_config(args)
    study = BadgeStudy(parse_events_file(args.events), config)
    print("⚖️  Checking covariate balance...\n")
    rows = study.balance(parse_covariates_file(args.covariates))
    for row in rows:
        mark = "✅" if row.balanced else "❌"
        print(f"  {mark} {row.covariate:<20} mean |SMD| {row.mean_smd:.4f}  sd {row.sd_smd:.4f}")
    print()
    print(f"✅ Table saved: {manager.save_table('balance', balance_frame(rows))}")
    return EXIT_OK


def cmd_series(args, manager: ResultManager) -> int:
    config = study_config(args)
    study = BadgeStudy(parse_events_file(args.events), config)
    print(f"📈 Intensity series: w={config.window:g}, stride={config.effective_stride:g}...\n")
    series = study.series()
    print(f"✅ Series saved: {manager.save_table('series', series.to_frame())}")
    if args.llr:
        print(f"✅ LLR series saved: {manager.save_table('llr_series', study.llr_series())}")
    return EXIT_OK


def cmd_grouped(args, manager: ResultManager) -> int:
    values: Dict[str, object] = load_config_file(args.config) if args.config else {}
    for key in ("tau", "horizon", "model", "rate"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    if args.seed is not None:
        values["seed"] = args.seed
    values["n_jobs"] = args.jobs
    config = StudyConfig.from_mapping(values)

    if args.tags:
        if config.model is ModelKind.ROBUST and not config.rate_is_fixed:
            raise ConfigError("grouped --tags with the robust model needs a single rate")
        print(f"🏷️  Grouping tags from {args.tags} by popularity...\n")
        tags = assign_buckets(parse_tags_file(args.tags))
        rate = config.rate_grid[0] if config.model is ModelKind.ROBUST else None
        fits = fit_grouped(tag_cohorts(tags, config.horizon), config.tau, config.model, rate)
    elif args.events and args.groups:
        study = BadgeStudy(parse_events_file(args.events), config)
        print(f"👥 Grouping users from {args.groups}...\n")
        fits = study.grouped(parse_groups_file(args.groups))
    else:
        raise ConfigError("grouped needs either --tags or both --events and --groups")

    for f in fits:
        flag = f"  ⚠️ {f.flag}" if f.flag else ""
        print(f"  • {str(f.group):<12} lambda0={f.lambda0_hat:.6g} lambda1={f.lambda1_hat:.6g} "
              f"n={f.n_units}{flag}")
    print()
    print(f"✅ Table saved: {manager.save_table('grouped', grouped_frame(fits))}")
    return EXIT_OK


def _synth_spec(args, **extra) -> SynthSpec:
    return SynthSpec(
        n_users=args.n_users, T=args.T, tau=args.tau, r=args.r, k0=args.k0,
        trend_a=args.trend_a, seed=args.seed or 0, **extra,
    )


def cmd_synth(args, manager: ResultManager) -> int:
    spec = _synth_spec(args, k1=args.k1, target_dP=args.target_dP)
    out = args.out or f"{manager.results_dir}/synth_events.tsv"
    print(f"🎲 Simulating {spec.n_users} user(s): T={spec.T:g}, tau={spec.tau:g}, "
          f"k0={spec.k0:g}, k1={spec.shape_post:.6g}, r={spec.r:g}...\n")
    write_events_file(simulate_cohort(spec), out)
    print(f"✅ Events saved: {out}")
    return EXIT_OK


def _parse_strengths(raw: str) -> List[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --strengths value {raw!r}: {exc}") from exc


def cmd_power(args, manager: ResultManager) -> int:
    strengths = _parse_strengths(args.strengths)
    spec = _synth_spec(args, target_dP=0.0)
    configs = default_test_configs(spec, window=args.window, n_controls=args.n_controls)
    print(f"⚡ Power study: {len(strengths)} strength(s) x {args.replicates} replicate(s)...\n")
    curve = run_power_study(strengths, args.replicates, spec, configs, n_jobs=args.jobs)
    frame = curve.to_frame()
    for row in frame.itertuples(index=False):
        print(f"  • E[dP]={row.strength:<6g} {row.method:<18} avg p {row.avg_p:.4f}  "
              f"rejection {row.rejection_rate:.3f}")
    print()
    print(f"✅ Table saved: {manager.save_table('power', frame)}")
    return EXIT_OK


def cmd_counterfactual(args, manager: ResultManager) -> int:
    tags = assign_buckets(parse_tags_file(args.tags))
    print(f"🏷️  Fitting pre-badge hazards for {len(tags)} tag(s)...\n")
    fits = fit_grouped(tag_cohorts(tags, args.horizon), args.tau)
    lambda0 = {f.group: f.lambda0_hat for f in fits if np.isfinite(f.lambda0_hat)}
    grid = np.linspace(0.0, args.horizon, args.grid_points)
    print(f"🎲 Replaying {args.replicates} world(s) without the badge...\n")
    counterfactual = simulate_counterfactual_wikis(
        tags, lambda0, args.horizon, args.replicates, seed=args.seed or 0,
        start=args.tau, grid=grid, n_jobs=args.jobs,
    )
    comparison = compare_worlds(observed_series(tags, grid), counterfactual)
    if comparison.exits_band:
        print(f"  • true world leaves the band {comparison.exit_direction} it at t={comparison.first_exit_time:g}")
    else:
        print("  • true world stays inside the counterfactual band")
    print()
    print(f"✅ Comparison saved: {manager.save_table('counterfactual', comparison.frame)}")
    print(f"✅ Grouped fits saved: {manager.save_table('counterfactual_groups', grouped_frame(fits))}")
    return EXIT_OK


def cmd_bounty(args, manager: ResultManager) -> int:
    questions = parse_questions_file(args.questions)
    print(f"💰 Fitting bounty hazards on {len(questions)} question(s)...\n")
    fit = fit_bounty_model(questions, args.tau, args.horizon)
    waiting = counterfactual_waiting_times(fit)
    for row in waiting.itertuples(index=False):
        print(f"  • {row.family:<15} stratum {row.stratum:>2}: {row.with_badge_days:.4g} days with badge, "
              f"{row.without_badge_days:.4g} without")
    print()
    median_tests = {}
    for stratum in BOUNTY_STRATA:
        try:
            chi2, p = answers_before_bounty_test(questions, args.tau, stratum)
            median_tests[str(stratum)] = {"chi2": chi2, "p": p}
        except BadgeSurvivalError as exc:
            logger.warning("median test for stratum %d skipped: %s", stratum, exc)
    uplift = answer_uplift(questions)
    for row in uplift.itertuples(index=False):
        verdict = row.flag or f"chi2 = {row.chi2:.3f}, p = {row.p:.4f}"
        print(f"  • {row.early_answers:>2} early answer(s): {row.n_bounty} with bounty, {row.n_plain} without, {verdict}")
    print(f"✅ Fits saved: {manager.save_table('bounty_fit', fit.to_frame())}")
    print(f"✅ Waiting times saved: {manager.save_table('bounty_waiting_times', waiting)}")
    if len(uplift):
        print(f"✅ Answer uplift saved: {manager.save_table('bounty_answer_uplift', uplift)}")
    _save_summary(manager, "bounty", {
        "rejected": fit.rejected,
        "strata": list(ANSWER_STRATA),
        "answers_before_bounty": median_tests,
        "answer_uplift": {
            row.early_answers: {"chi2": row.chi2, "p": row.p} for row in uplift.itertuples(index=False) if not row.flag
        },
    })
    return EXIT_OK


def cmd_eligibility(args, manager: ResultManager) -> int:
    log = merge_reputation_logs([parse_reputation_file(path) for path in args.reputation])
    print(f"🏅 Scanning {len(log)} reputation change(s) for threshold {args.threshold:g}...\n")
    starts = derive_eligibility(log, args.threshold)
    actions = parse_actions_file(args.actions) if args.actions else None
    records = eligibility_records(starts, actions)
    n_acted = sum(not r.censored for r in records)
    print(f"  • {len(records)} eligible user(s), {n_acted} with an action\n")
    out = args.out or f"{manager.results_dir}/eligibility_events.tsv"
    write_events_file(records, out)
    print(f"✅ Events saved: {out}")
    _save_summary(manager, "eligibility", {
        "threshold": args.threshold,
        "n_log_rows": len(log),
        "n_eligible": len(records),
        "n_acted": n_acted,
    })
    return EXIT_OK


def cmd_results(args, manager: ResultManager) -> int:
    listing = manager.list_results(args.limit)
    print(f"📚 {listing['count']} saved result(s) in {manager.results_dir}:\n")
    for item in listing["results"]:
        print(f"  • {item['filename']}")
        print(f"    └─ {item['name']} {(item['result_id'] or '')[:16]}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "test": cmd_test,
    "balance": cmd_balance,
    "series": cmd_series,
    "grouped": cmd_grouped,
    "synth": cmd_synth,
    "power": cmd_power,
    "counterfactual": cmd_counterfactual,
    "bounty": cmd_bounty,
    "eligibility": cmd_eligibility,
    "results": cmd_results,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    print_banner()

    try:
        manager = ResultManager(args.output_dir)
        return COMMANDS[args.command](args, manager)
    except ConfigError as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BadgeSurvivalError as exc:
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"❌ Invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
