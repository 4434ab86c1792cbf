"""Command-line front end.

Commands:
    thresholds   security threshold over sequence lengths (JSON)
    fig3         threshold transmittances per sequence length (CSV)
    simulate     Monte Carlo sessions, estimates vs closed forms (JSON or CSV)
    attack       like simulate with an adversary chosen by ``--kind``
    validate     run the acceptance checks

Exit status: 0 success, 1 validation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import adversary as adv
from . import analytics
from .harness import HarnessError, compare_to_analytic, estimate_rate, run_trials, session_estimates, trial_rng
from .protocol import export_key_bits, honest_click_rate, run_session
from .scenario import ScenarioError, describe, load_scenario
from .source import ConfigurationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_range(text: str) -> range:
    """``"1..6"`` -> range(1, 7); a single integer ``"4"`` -> range(1, 5)."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+))?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}")
    if m.group(2) is None:
        lo, hi = 1, int(m.group(1))
    else:
        lo, hi = int(m.group(1)), int(m.group(2))
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty or invalid range {text!r}")
    return range(lo, hi + 1)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float)
    g.add_argument("--alpha-db", type=float, dest="alpha_db")
    p.add_argument("--dark", type=float)
    p.add_argument("--N", type=int, dest="N", help="fixed packet dimension")
    p.add_argument("--scheme", choices=("randomized_dimension", "fixed_dimension_random_gap"))
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--slots", type=_positive_int, dest="session_slots", help="slots per session")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timebin-qss", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("thresholds", "fig3"):
        p = sub.add_parser(name)
        p.add_argument("scenario", nargs="?", help="scenario JSON (mu, dark and S are read from it)")
        p.add_argument("--mu", type=float)
        p.add_argument("--dark", type=float)
        p.add_argument("--S", type=float, dest="S", help="signal-slot probability")
        p.add_argument("--n", type=parse_range, default=range(1, 7), help="sequence lengths, e.g. 1..6")
        p.add_argument("--output", "-o")

    p = sub.add_parser("simulate")
    p.add_argument("scenario", nargs="?")
    _add_overrides(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--key-bits", help="write the first session's sifted key bits to this file")
    p.add_argument("--output", "-o")

    p = sub.add_parser("attack")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--kind", required=True, choices=adv.KINDS)
    p.add_argument("--n", type=_positive_int, default=None, help="sequence length (bob_ir_sequential)")
    p.add_argument("--no-rate-match", action="store_true")
    _add_overrides(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o")

    p = sub.add_parser("validate")
    p.add_argument("--trials", type=int, default=1, help="Monte Carlo scale factor (>= 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated criteria")
    p.add_argument("--output", "-o")
    return parser


# helpers -------------------------------------------------------------------

def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _threshold_params(args):
    mu, dark, S = 0.1, 1e-5, 0.5
    if args.scenario:
        sc = load_scenario(args.scenario)
        mu, dark, S = sc.source.mu, sc.channel.dark, float(sc.S)
    mu = args.mu if args.mu is not None else mu
    dark = args.dark if args.dark is not None else dark
    S = args.S if args.S is not None else S
    if not 0 < mu:
        raise UsageError("--mu must be positive")
    if dark < 0:
        raise UsageError("--dark must be >= 0")
    return mu, S, dark


def _overrides(args) -> dict:
    keys = ("mu", "alpha", "alpha_db", "dark", "N", "scheme", "trials", "seed", "session_slots")
    return {k: getattr(args, k, None) for k in keys}


# commands ------------------------------------------------------------------

def cmd_thresholds(args) -> int:
    mu, S, d = _threshold_params(args)
    rows = analytics.fig3_rows(mu, S, d, args.n)
    report = analytics.ThresholdReport(mu, S, d, rows)
    out = report.to_dict()
    out["loss_budget"] = analytics.loss_budget(threshold_db=report.security_threshold_db).to_dict() if report.security_threshold > 0 else None
    _write(_json(out), args.output)
    return EXIT_OK


def cmd_fig3(args) -> int:
    mu, S, d = _threshold_params(args)
    _write(analytics.fig3_csv(analytics.fig3_table(mu, S, d, args.n)), args.output)
    return EXIT_OK


def _analytic_for(scenario, total) -> dict:
    """Closed-form counterparts of the session estimates for this scenario."""
    src, ch, a = scenario.source, scenario.channel, scenario.adversary
    S = float(scenario.S)
    mu, alpha, d = src.mu, ch.alpha, ch.dark
    out: dict = {}
    if a is None or a.kind == adv.EVE_BS:
        out["key_rate"] = analytics.honest_key_rate(mu, S, alpha)
        out["alice_count_rate"] = honest_click_rate(src, alpha, d)
        out["detection_rate"] = 0.0
    if a is not None and a.kind == adv.EVE_BS:
        out["eve_coincidence_probability"] = analytics.eve_bs_info(mu, alpha, total.sifted_signal)[0]
    if a is not None and a.is_bob:
        m = analytics.bob_sequential_metrics(a.n, mu, S, d, alpha=alpha)
        out["detection_rate"] = float(m.detection_rate)
        out["error_resend_fraction"] = float(m.y)
        if a.rate_match:
            out["alice_count_rate"] = honest_click_rate(src, alpha, d)
    if a is not None and a.kind in (adv.EVE_IR_ENTANGLED, adv.EVE_IR_CLASSICAL):
        out["resend_qber"] = 0.25 if a.kind == adv.EVE_IR_ENTANGLED else 1 / 6
    return out


def _estimates_for(scenario, total) -> dict:
    est = session_estimates(total)
    est["key_rate"] = estimate_rate(total.sifted_signal_genuine, total.n_slots)
    a = scenario.adversary
    if a is None:
        return est
    if a.kind == adv.EVE_BS and total.adversary.get("eve_instances"):
        from .validation import eve_bs_estimate

        est["eve_coincidence_probability"] = eve_bs_estimate(total)
    if a.is_bob and total.adversary.get("resends"):
        est["error_resend_fraction"] = estimate_rate(total.adversary["resends_with_error_slot"], total.adversary["resends"])
    if a.kind in (adv.EVE_IR_ENTANGLED, adv.EVE_IR_CLASSICAL):
        from .validation import eve_resend_counts

        n = max(int(total.adversary.get("resends", 0)), 1)
        errors, coinc = eve_resend_counts(trial_rng(scenario.seed, scenario.trials), a.kind, n)
        if coinc:
            est["resend_qber"] = estimate_rate(errors, coinc)
    return est


def _simulate(scenario, fmt: str, output: Optional[str], key_bits: Optional[str] = None) -> int:
    results = run_trials(scenario)
    total = results.total
    est = _estimates_for(scenario, total)
    ana = _analytic_for(scenario, total)
    matched = {k: v for k, v in est.items() if k in ana}
    comparison = compare_to_analytic(matched, ana)
    if fmt == "csv":
        text = comparison.to_csv()
    else:
        text = _json({
            "scenario": describe(scenario),
            "totals": total.to_dict(),
            "aborted_sessions": total.aborts,
            "estimates": {k: v.to_dict() for k, v in sorted(est.items())},
            "comparison": comparison.to_dict(),
        })
    _write(text, output)
    if key_bits:
        first = run_session(scenario, trial_rng(scenario.seed, 0), keep_transcript=True)
        try:
            export_key_bits(first.transcript["key_bits"], key_bits)
        except OSError as exc:
            raise UsageError(f"cannot write {key_bits}: {exc.strerror}") from None
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario, _overrides(args))
    return _simulate(scenario, args.format, args.output, args.key_bits)


def cmd_attack(args) -> int:
    scenario = load_scenario(args.scenario, _overrides(args))
    n = args.n if args.n is not None else (2 if args.kind == adv.BOB_IR_SEQUENTIAL else 1)
    model = adv.AdversaryModel(args.kind, n=n, rate_match=not args.no_rate_match)
    return _simulate(scenario.with_(adversary=model), args.format, args.output)


def cmd_validate(args) -> int:
    from .validation import CHECKS, run_validation

    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.only and any(k not in CHECKS for k in args.only):
        raise UsageError(f"--only takes criteria among {sorted(CHECKS)}")
    results = run_validation(args.seed, float(args.trials), args.only, progress=lambda r: print(r.line(), flush=True))
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    if args.output:
        _write(_json({"passed": passed, "criteria": [r.to_dict() for r in results]}), args.output)
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "thresholds": cmd_thresholds,
    "fig3": cmd_fig3,
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ScenarioError, ConfigurationError, analytics.DomainError, adv.AttackInfeasible, HarnessError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
