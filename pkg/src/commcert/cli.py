"""Command-line entry point: detect, certify, evaluate, oracle-check, validate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from commcert import __version__
from commcert.certify import CertifyResult, certify
from commcert.evalharness import (
    MODES,
    ExperimentConfig,
    coerce_config,
    parse_config,
    prepare_experiment,
    run_experiment,
    sample_attacker_nodes,
    validate_guarantee,
)
from commcert.graphio import build_pair_space, parse_edge_list, structure_vector
from commcert.louvain import louvain_detect, modularity
from commcert.smoothing import CommunityFunction, NoiseSpec, SampleCounts


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def cmd_detect(args) -> int:
    graph = parse_edge_list(args.graph)
    assignment = louvain_detect(graph, seed=args.seed)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for node in sorted(assignment.membership):
            out.write(f"{node}\t{assignment.membership[node]}\n")
        q = modularity(graph, assignment) if graph.num_edges else 0.0
        out.write(f"# modularity={q!r}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_certify(args) -> int:
    graph = parse_edge_list(args.graph)
    victims = _int_list(args.victims)
    if args.attackers:
        attackers = sorted(set(_int_list(args.attackers)))
    else:
        attackers = sample_attacker_nodes(graph, args.attacker_nodes, args.seed)
    graph = graph.with_nodes(victims)
    space = build_pair_space(attackers)
    f = CommunityFunction(graph, space, victims, detector_seed=args.seed)
    spec = NoiseSpec(args.beta)
    result = certify(f, structure_vector(graph, space), spec, args.n_samples, args.alpha, args.seed, args.l_max)
    line = json.dumps(result.to_record(victims), sort_keys=True)
    print(line)
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(line + "\n")
    return 0


_OVERRIDES = ("dataset", "communities", "beta", "alpha", "n_samples", "victim_size", "victim_count",
              "per_community", "attacker_nodes", "seed", "l_max", "out_dir")


def _resolve_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = parse_config(fh.read())
    for key in _OVERRIDES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.mode:
        values["mode"] = args.mode
    missing = [k for k in ("dataset", "communities") if k not in values]
    if missing:
        raise SystemExit(f"missing required setting(s): {', '.join(missing)}")
    return coerce_config(values)


def cmd_evaluate(args) -> int:
    config = _resolve_config(args)
    out = run_experiment(config)
    curve = out.curve
    abstain = sum(r.abstain for r in out.results)
    print(f"mode={config.mode} sets={curve.M} abstain={abstain} n={out.experiment.n}")
    print(f"CA(0)={curve.points[0]:.4f} first_zero={curve.first_zero()}")
    if config.out_dir:
        print(f"wrote {os.path.join(config.out_dir, 'curve.csv')}")
    return 0


def cmd_oracle_check(args) -> int:
    from commcert.oracle import run_suite

    rows = run_suite(quick=args.quick, seed=args.seed)
    width = max(len(r.check) for r in rows)
    print(f"{'check':<{width}}  {'cases':>8}  {'violations':>10}  result")
    for r in rows:
        print(f"{r.check:<{width}}  {r.cases:>8}  {r.violations:>10}  {'PASS' if r.passed else 'FAIL'}")
    return 0 if all(r.passed for r in rows) else 1


def _result_from_record(rec: dict) -> CertifyResult:
    counts = SampleCounts(rec["m0"], rec["m1"], rec["N"], rec["seed"])
    y = -1 if rec["abstain"] else rec["y_hat"]
    return CertifyResult(y, rec["p_lower"], rec["L"], counts, rec["beta"], rec["alpha"])


def cmd_validate(args) -> int:
    with open(os.path.join(args.run_dir, "run_meta.json")) as fh:
        meta = json.load(fh)
    config = ExperimentConfig(**meta["config"])
    exp = prepare_experiment(config)
    x = structure_vector(exp.graph, exp.space)
    with open(os.path.join(args.run_dir, "results.jsonl")) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    chosen = [r for r in records if not r["abstain"] and r["L"]][: args.sets]
    if not chosen:
        print("no certified victim set with L >= 1; nothing to validate")
        return 0
    total_flips = 0
    for i, rec in enumerate(chosen):
        result = _result_from_record(rec)
        f = CommunityFunction(exp.graph, exp.space, rec["victims"], detector_seed=config.seed)
        rep = validate_guarantee(result, f, x, trials=args.trials, seed=args.seed + i, N=args.n_samples)
        total_flips += rep.high_confidence_flips
        print(f"victims={rec['victims']} L={rep.L} checked={rep.checked} "
              f"flips={len(rep.flips)} high_confidence={rep.high_confidence_flips}")
    print(f"high-confidence flips: {total_flips}")
    return 0 if total_flips == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="commcert", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run Louvain and print node<TAB>community")
    d.add_argument("graph")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("certify", help="certify one victim set")
    c.add_argument("graph")
    c.add_argument("--victims", required=True, help="comma separated node ids")
    c.add_argument("--attackers", help="comma separated attacker-controlled nodes")
    c.add_argument("--attacker-nodes", type=int, default=100, help="random attacker count when --attackers is absent")
    c.add_argument("--beta", default="0.7")
    c.add_argument("--alpha", type=float, default=0.001)
    c.add_argument("--n-samples", type=int, default=10_000)
    c.add_argument("--l-max", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="append the JSON record to this file")
    c.set_defaults(func=cmd_certify)

    e = sub.add_parser("evaluate", help="certified accuracy over sampled victim sets")
    e.add_argument("--config")
    e.add_argument("--mode", choices=MODES)
    for key in _OVERRIDES:
        e.add_argument("--" + key.replace("_", "-"), dest=key)
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle-check", help="small-n exhaustive verification suite")
    o.add_argument("--quick", action="store_true")
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle_check)

    v = sub.add_parser("validate", help="probe certified sets of an evaluate run with perturbations")
    v.add_argument("run_dir")
    v.add_argument("--sets", type=int, default=20)
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--n-samples", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
