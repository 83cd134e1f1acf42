"""
Main entry point for beacon-guard.
Generates panels, builds LD indexes, runs attacks, defenses, oracles and sweeps,
and compares swept methods by frontier dominance.

    python -m src.main --out data/panel.txt gen-data --mode beacon --m 1000 --n 400
    python -m src.main --panel data/panel.txt --out sol.json defend spgb --alpha 0.9 --w 1 --theta 0
    python -m src.main --panel data/panel.txt verify --solution sol.json
    python -m src.main pareto --sweep data/outputs/sweep.csv --method-a spg-b --method-b rf
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from src.core.errors import BeaconGuardError, ParameterError
from src.core.ld import LdIndex, build_index
from src.core.lrt import DEFAULT_GAMMA, ReleaseState, precompute_beacon_constants
from src.core.solution import evaluate_solution, load_solution, save_solution, state_from_record
from src.core.threat import ADAPTIVE, FIXED, ThreatModel, attacker_index, ld_attack, score_and_cover
from src.data.panel import BEACON, MODES, DatasetConfig, generate_panel, load_panel, save_panel
from src.defenses.baselines import AAF_METHODS, BEACON_METHODS, DP_BEACON, DP_LAPLACE, LINKAGE, RF, BaselineConfig, run_baseline
from src.defenses.oracle import OracleLimits, optimality_gap, solve_aaf_exact, solve_beacon_exact
from src.defenses.spgb import RESTRICT_MODES, SpgbConfig, spgb
from src.defenses.spgr import BOUNDED, UNBOUNDED, VARIANTS, SpgrConfig, spgr
from src.processors.pareto import compare_methods
from src.processors.sweep import SweepSpec, run_sweep
from src.utils.config import load_config, section
from src.utils.csv_writer import CsvWriter, read_records, write_margins
from src.utils.logger import setup_logger

logger = logging.getLogger("src.main")

VERIFY_TOL = 1e-9


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_threat_args(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=(FIXED, ADAPTIVE), help="attacker threshold model")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--theta", type=float, help="fixed attacker threshold")
    group.add_argument("--k", type=float, help="adaptive threshold percentile")
    p.add_argument("--quorum", type=float, help="LD attack quorum")


def _add_objective_args(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float)
    p.add_argument("--w", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beacon-guard", description="Membership-inference attacks and defenses for genomic summary releases")
    parser.add_argument("--config", help="config JSON (default: $BEACON_GUARD_CONFIG or config/default_config.json)")
    parser.add_argument("--panel", help="panel file")
    parser.add_argument("--out", help="output file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--log-file")
    parser.add_argument("--json-logs", action="store_true")
    parser.add_argument("--gamma", type=float)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic panel")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--n-ref", type=int)
    p.add_argument("--beta-a", type=float)
    p.add_argument("--beta-b", type=float)
    p.add_argument("--block-len", type=int)
    p.add_argument("--block-rho", type=float)

    p = sub.add_parser("ld", help="build the LD neighbour index")
    p.add_argument("--window", type=int)
    p.add_argument("--t-ld", type=float)
    p.add_argument("--source", choices=("dataset", "reference", "pooled"))

    p = sub.add_parser("attack", help="score a release and report who is detected")
    _add_threat_args(p)
    p.add_argument("--solution", help="defense solution JSON; undefended release if omitted")
    p.add_argument("--ld", action="store_true", help="also run the LD correlation attack")
    p.add_argument("--t-ld", type=float, help="LD threshold of the attacker's neighbour index")
    p.add_argument("--window", type=int, help="LD window of the attacker's neighbour index")
    p.add_argument("--ld-index", help="LD index .npz (built from --t-ld/--window if omitted)")

    p = sub.add_parser("defend", help="run a defense")
    dsub = p.add_subparsers(dest="defense", required=True)

    d = dsub.add_parser("spgb")
    _add_objective_args(d)
    _add_threat_args(d)
    d.add_argument("--actions", "--mode", dest="actions", choices=RESTRICT_MODES)
    d.add_argument("--ld-defense", action="store_true")
    d.add_argument("--ld-index")
    d.add_argument("--force-propagation", action="store_true")
    d.add_argument("--no-positivity", action="store_true", help="adaptive mode: allow non-positive gains")

    d = dsub.add_parser("spgr")
    _add_objective_args(d)
    _add_threat_args(d)
    _add_spgr_args(d)

    d = dsub.add_parser("baseline")
    _add_objective_args(d)
    _add_threat_args(d)
    d.add_argument("--method", required=True, choices=BEACON_METHODS + AAF_METHODS)
    d.add_argument("--action", choices=("flip", "mask"))
    d.add_argument("--p", type=float)
    d.add_argument("--epsilon", type=float)
    d.add_argument("--min-privacy", type=float)
    d.add_argument("--ld-index")
    _add_spgr_args(d)

    p = sub.add_parser("oracle", help="exhaustive optimum on a tiny panel")
    _add_objective_args(p)
    _add_threat_args(p)
    p.add_argument("--grid", type=int)
    p.add_argument("--actions", "--mode", dest="actions", choices=RESTRICT_MODES, default="both")
    p.add_argument("--restrict-to", help="solution JSON whose actioned SNVs bound the search")
    p.add_argument("--compare-to", help="solution JSON whose objective is reported against the optimum")

    p = sub.add_parser("verify", help="recompute a solution's metrics")
    p.add_argument("--solution", required=True)

    p = sub.add_parser("sweep", help="parameter sweep to CSV")
    p.add_argument("--methods")
    p.add_argument("--w-grid")
    p.add_argument("--alphas")
    p.add_argument("--thetas")
    p.add_argument("--ks")
    p.add_argument("--epsilons")
    p.add_argument("--ps")
    p.add_argument("--runs", type=int)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--ld-attack", action="store_true", help="score releases after the LD correlation attack")
    p.add_argument("--ld-index")

    p = sub.add_parser("pareto", help="frontier dominance between two methods of a sweep CSV")
    p.add_argument("--sweep", required=True, help="sweep CSV")
    p.add_argument("--method-a", default="spg-b")
    p.add_argument("--method-b", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def _add_spgr_args(p: argparse.ArgumentParser):
    p.add_argument("--t", type=int)
    p.add_argument("--epsilons")
    p.add_argument("--sensitivity", choices=(UNBOUNDED, BOUNDED))
    p.add_argument("--avg-hamming", type=float)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--runs", type=int)
    p.add_argument("--no-noiseless", action="store_true")
    p.add_argument("--noise-reuse", action="store_true")


def _overlay(base: dict, **values) -> dict:
    """Config section with CLI values that were given."""
    merged = dict(base)
    merged.update({k: v for k, v in values.items() if v is not None})
    return merged


def _threat(config: dict, args) -> ThreatModel:
    threat = dict(section(config, "threat"))
    if getattr(args, "model", None) is not None:
        threat["model"] = args.model
    if getattr(args, "theta", None) is not None:
        if getattr(args, "model", None) == ADAPTIVE:
            raise ParameterError("--theta", args.theta, "the fixed model")
        threat.update(model=FIXED, theta=args.theta)
    if getattr(args, "k", None) is not None:
        if getattr(args, "model", None) == FIXED:
            raise ParameterError("--k", args.k, "the adaptive model")
        threat.update(model=ADAPTIVE, k=args.k)
    if getattr(args, "quorum", None) is not None:
        threat["quorum"] = args.quorum
    if getattr(args, "t_ld", None) is not None:
        threat["t_ld"] = args.t_ld
    if getattr(args, "window", None) is not None:
        threat["window"] = args.window
    if getattr(args, "ld", False):
        threat["ld"] = True
    return ThreatModel.from_config(threat)


def _gamma(config: dict, args) -> float:
    if args.gamma is not None:
        return args.gamma
    return section(config, "lrt").get("gamma", DEFAULT_GAMMA)


def _require_panel(args):
    if not args.panel:
        raise ParameterError("--panel", None, "a panel file")
    return load_panel(args.panel)


def _load_ld_index(config: dict, panel, path: Optional[str], threads: int) -> LdIndex:
    if path:
        return LdIndex.load(path)
    ld = section(config, "ld")
    return build_index(panel, ld.get("window", 250), ld.get("t_ld", 0.2), ld.get("source", "dataset"),
                       threads=threads, block_size=ld.get("block_size", 4096))


def _mean_summary(solutions) -> dict:
    summaries = [s.summary() for s in solutions]
    mean = dict(summaries[0])
    for key in ("utility_pct", "privacy_pct", "objective", "n_masked", "n_flipped", "noise_l1"):
        mean[key] = float(np.mean([s[key] for s in summaries]))
    mean["runs"] = len(summaries)
    return mean


def cmd_gen_data(config: dict, args) -> int:
    values = _overlay(
        section(config, "dataset"),
        mode=args.mode, m=args.m, n=args.n, n_ref=args.n_ref, beta_a=args.beta_a, beta_b=args.beta_b,
        block_len=args.block_len, block_rho=args.block_rho, seed=args.seed,
    )
    panel = generate_panel(DatasetConfig.from_config(values))
    out = args.out or "data/panel.txt"
    save_panel(panel, out)
    print(f"Panel written to {out} (m={panel.m}, n={panel.n}, n_ref={panel.n_ref}, mode={panel.mode})")
    return 0


def cmd_ld(config: dict, args) -> int:
    panel = _require_panel(args)
    ld = _overlay(section(config, "ld"), window=args.window, t_ld=args.t_ld, source=args.source)
    index = build_index(panel, ld.get("window", 250), ld.get("t_ld", 0.2), ld.get("source", "dataset"),
                        threads=args.threads or 1, block_size=ld.get("block_size", 4096))
    out = args.out or "data/ld_index.npz"
    index.save(out)
    print(f"LD index written to {out}: {index.pair_count()} pairs, window={index.window}, t_LD={index.t_ld}")
    return 0


def cmd_attack(config: dict, args) -> int:
    panel = _require_panel(args)
    model = _threat(config, args)
    consts = precompute_beacon_constants(panel, _gamma(config, args)) if panel.mode == BEACON else None
    if args.solution:
        state = state_from_record(panel, load_solution(args.solution))
    else:
        state = ReleaseState.for_panel(panel)
    report, scores, _ = score_and_cover(panel, state, replace(model, ld_aware=False), consts)
    payload = {
        "threat": model.label,
        "threshold": report.threshold,
        "n": panel.n,
        "detected": panel.n - report.size,
        "protected": report.size,
        "privacy_pct": report.privacy_pct,
        "mean_score": float(scores.mean()),
    }
    ld_report = None
    if model.ld_aware:
        if panel.mode != BEACON:
            raise ParameterError("--ld", True, "a beacon panel")
        index = LdIndex.load(args.ld_index) if args.ld_index else attacker_index(panel, model)
        ld_report = ld_attack(panel, consts, state, model, index)
        payload["ld"] = {
            "inferred": len(ld_report.inferred),
            "recovered": int(ld_report.recovered.size),
            "privacy_pct": ld_report.coverage.privacy_pct,
            "note": ld_report.label,
        }
    if args.out:
        payload["margins"] = write_margins(report, scores, args.out, ld_report)
    print(json.dumps(payload, indent=2))
    return 0


def _spgr_config(config: dict, args, model: ThreatModel) -> SpgrConfig:
    values = _overlay(
        section(config, "spgr"),
        alpha=args.alpha, w=args.w, t=args.t, sensitivity=args.sensitivity, avg_hamming=args.avg_hamming,
        variant=args.variant, seed=args.seed, runs=args.runs, threads=args.threads,
        epsilons=_floats(args.epsilons) if args.epsilons else None,
    )
    if args.no_noiseless:
        values["include_noiseless"] = False
    if args.noise_reuse:
        values["noise_reuse"] = True
    return SpgrConfig.from_config(values, model=model)


def cmd_defend(config: dict, args) -> int:
    panel = _require_panel(args)
    model = _threat(config, args)
    gamma = _gamma(config, args)
    consts = precompute_beacon_constants(panel, gamma) if panel.mode == BEACON else None

    if args.defense == "spgb":
        values = _overlay(section(config, "spgb"), alpha=args.alpha, w=args.w, restrict_mode=args.actions)
        if args.force_propagation:
            values["force_propagation"] = True
        if args.no_positivity:
            values["adaptive_positivity"] = False
        index = None
        if args.ld_defense or values.get("ld_defense"):
            values["ld_defense"] = True
            index = _load_ld_index(config, panel, args.ld_index, args.threads or 1)
        solutions = [spgb(panel, consts, SpgbConfig.from_config(values, model=model, ld_index=index))]
    elif args.defense == "spgr":
        cfg = _spgr_config(config, args, model)
        solutions = [spgr(panel, replace(cfg, seed=cfg.seed + run)) for run in range(cfg.runs)]
    else:
        values = _overlay(
            section(config, "baselines"), method=args.method, action=args.action, alpha=args.alpha, w=args.w,
            p=args.p, epsilon=args.epsilon, min_privacy_pct=args.min_privacy, seed=args.seed,
        )
        cfg = BaselineConfig.from_config(values, model=model)
        spgr_cfg = replace(_spgr_config(config, args, model), alpha=cfg.alpha, w=cfg.w)
        index = _load_ld_index(config, panel, args.ld_index, args.threads or 1) if cfg.method == LINKAGE else None
        runs = spgr_cfg.runs if cfg.method in (RF, DP_BEACON, DP_LAPLACE) else 1
        solutions = [
            run_baseline(panel, replace(cfg, seed=cfg.seed + run), consts=consts, ld_index=index,
                         spgr_cfg=replace(spgr_cfg, seed=spgr_cfg.seed + run))
            for run in range(runs)
        ]

    if args.out:
        save_solution(solutions[0], args.out)
    summary = _mean_summary(solutions)
    summary["gamma"] = gamma
    print(json.dumps(summary, indent=2))
    return 0


def cmd_oracle(config: dict, args) -> int:
    panel = _require_panel(args)
    model = _threat(config, args)
    limits = OracleLimits.from_config(_overlay(section(config, "oracle"), grid=args.grid, threads=args.threads))
    alpha = args.alpha if args.alpha is not None else section(config, "spgb").get("alpha", 0.9)
    w = args.w if args.w is not None else section(config, "spgb").get("w", 1.0)
    if panel.mode == BEACON:
        consts = precompute_beacon_constants(panel, _gamma(config, args))
        restrict = None
        if args.restrict_to:
            record = load_solution(args.restrict_to)
            restrict = sorted(set(record.get("flips", [])) | set(record.get("masks", [])))
        solution = solve_beacon_exact(panel, consts, alpha, w, model, limits, restrict_to=restrict, actions=args.actions)
    else:
        solution = solve_aaf_exact(panel, alpha, w, model, limits)
    if args.out:
        save_solution(solution, args.out)
    summary = solution.summary()
    if args.compare_to:
        record = load_solution(args.compare_to)
        summary["compared_method"] = record.get("method", "")
        summary["gap"] = optimality_gap(record["objective"], solution)
    print(json.dumps(summary, indent=2))
    return 0


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= VERIFY_TOL * max(1.0, abs(a), abs(b))


def cmd_verify(config: dict, args) -> int:
    panel = _require_panel(args)
    record = load_solution(args.solution)
    model = ThreatModel.from_config(record.get("threat_model", {}))
    consts = precompute_beacon_constants(panel, _gamma(config, args)) if panel.mode == BEACON else None
    state = state_from_record(panel, record)
    fresh = evaluate_solution(panel, state, model, record["alpha"], record["w"], consts=consts, method=record.get("method", ""))
    mismatches = {}
    for key in ("utility_pct", "privacy_pct", "objective", "noise_l1"):
        recomputed = getattr(fresh, key)
        if not _close(float(record[key]), recomputed):
            mismatches[key] = {"stored": record[key], "recomputed": recomputed}
    if sorted(record.get("covered", [])) != [int(i) for i in np.flatnonzero(fresh.covered)]:
        mismatches["covered"] = "protected set differs"
    if mismatches:
        logger.error(f"Verification failed for {args.solution}: {mismatches}")
        print(json.dumps({"verified": False, "mismatches": mismatches}, indent=2, default=str))
        return 1
    print(json.dumps({"verified": True, **fresh.summary()}, indent=2))
    return 0


def cmd_sweep(config: dict, args) -> int:
    panel = _require_panel(args)
    values = dict(section(config, "sweep"))
    for key, raw in (("w_grid", args.w_grid), ("alphas", args.alphas), ("thetas", args.thetas), ("ks", args.ks),
                     ("epsilons", args.epsilons), ("ps", args.ps)):
        if raw is not None:
            values[key] = _floats(raw)
    if args.methods:
        values["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    values = _overlay(values, runs=args.runs, seed=args.seed, threads=args.threads)
    if args.timing:
        values["timing"] = True
    if args.ld_attack:
        values["ld_attack"] = True
    values.setdefault("gamma", section(config, "lrt").get("gamma", DEFAULT_GAMMA))
    values["spgr"] = section(config, "spgr")
    ld = section(config, "ld")
    values.setdefault("ld_window", ld.get("window", 250))
    values.setdefault("ld_t", ld.get("t_ld", 0.2))
    spec = SweepSpec.from_config(values)

    index = LdIndex.load(args.ld_index) if args.ld_index else None
    records = run_sweep(spec, panel, index)
    output = dict(section(config, "output"))
    output["include_timing"] = spec.timing or output.get("include_timing", False)
    writer = CsvWriter({"output": output})
    path = writer.write_records(records, args.out)
    print(f"Sweep complete: {len(records)} records written to {path}")
    return 0


def cmd_pareto(config: dict, args) -> int:
    records = read_records(args.sweep)
    groups = compare_methods(records, args.method_a, args.method_b, args.tol)
    if not groups:
        raise ParameterError("--method-b", args.method_b, f"a method swept alongside {args.method_a} in {args.sweep}")
    payload = {
        "method_a": args.method_a,
        "method_b": args.method_b,
        "holds": all(g["holds"] for g in groups),
        "groups": groups,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        logger.info(f"Dominance report written to {args.out}")
    print(text)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "ld": cmd_ld,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "pareto": cmd_pareto,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and dispatch to the subcommand."""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    log_cfg = section(config, "logging")
    level = getattr(logging, str(log_cfg.get("level", "INFO")).upper(), logging.INFO)
    setup_logger("src", args.log_file or log_cfg.get("log_file"), level=level,
                 json_format=args.json_logs or log_cfg.get("json", False))

    try:
        return COMMANDS[args.command](config, args)
    except (BeaconGuardError, FileNotFoundError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"\nError: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
