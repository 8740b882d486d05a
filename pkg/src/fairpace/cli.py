"""Command-line interface.

Subcommands
-----------
gen     generator spec -> instance CSV
run     experiment config (YAML) -> trajectory CSV, summary JSON, SVG
eval    saved trace JSON + instance CSV -> metrics JSON
solve   instance CSV -> equilibrium JSON
attack  adversarial constructions (instance CSV + certified numbers)
plot    trajectory CSV -> SVG

Usage errors (unknown variant, malformed schedule, bad flags) exit with
code 2; runtime failures exit with code 1.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional

import numpy as np

from .dynamics import RunTrace, variant_label
from .eg import solve_eg
from .harness import (
    ExperimentConfig,
    model_from_dict,
    parse_checkpoints,
    parse_variant,
    plot_trajectories,
    run_experiment,
)
from .inputs import (
    adv_constrained_failure,
    adv_cr_killer,
    adv_envy_worstcase,
    gen as generate,
)
from .metrics import build_report
from .model import AgentWeights, InstanceError, load_csv, save_csv


def _parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ',': "1,0;0,1"."""
    try:
        rows = [[float(x) for x in row.split(",")] for row in text.split(";") if row.strip()]
        return np.array(rows, dtype=np.float64)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed matrix {text!r}") from None


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed number list {text!r}") from None


def _variant_arg(text: str):
    try:
        return parse_variant(text)
    except (InstanceError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _checkpoints_arg(text: str) -> str:
    if text != "pow2":
        try:
            parse_checkpoints(text, t=1 << 62)
        except (InstanceError, ValueError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairpace", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance CSV from a model spec")
    g.add_argument("--model", choices=["iid", "periodic"], help="inline model type")
    g.add_argument("--support", type=_parse_matrix, help="support vectors, 'v11,v12;v21,v22'")
    g.add_argument("--probs", type=_parse_floats, help="support probabilities (default uniform)")
    g.add_argument("--pools", help="periodic pools, pools split by '|', rows by ';'")
    g.add_argument("--spec", help="YAML file with a full model spec (any model type)")
    g.add_argument("--t", type=int, help="horizon length")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rep", type=int, default=0, help="repetition substream index")
    g.add_argument("--out", required=True, help="output CSV path")

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="YAML experiment config")
    r.add_argument("--reps", type=int, help="override repetition count")
    r.add_argument("--seed", type=int, help="override the instance seed")
    r.add_argument("--tol", type=float, help="override hindsight solver tolerance")
    r.add_argument("--checkpoints", type=_checkpoints_arg, help="override schedule ('pow2' or comma list)")
    r.add_argument("--out", help="override output directory")

    e = sub.add_parser("eval", help="evaluate a saved trace against its instance")
    e.add_argument("trace", help="trace JSON (RunTrace.to_json_dict output)")
    e.add_argument("--instance", required=True, help="instance CSV")
    e.add_argument("--tol", type=float, default=1e-9, help="benchmark solver tolerance")
    e.add_argument("--out", help="metrics JSON path (default stdout)")

    s = sub.add_parser("solve", help="solve the hindsight benchmark for an instance")
    s.add_argument("instance", help="instance CSV")
    s.add_argument("--weights", type=_parse_floats, help="agent weights (default equal)")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--include-allocation", action="store_true")
    s.add_argument("--out", help="equilibrium JSON path (default stdout)")

    a = sub.add_parser("attack", help="emit an adversarial construction")
    a.add_argument(
        "--construction",
        required=True,
        choices=["envy-worstcase", "cr-killer", "constrained-failure"],
    )
    a.add_argument("--out", required=True, help="instance CSV path")
    a.add_argument("--eps", type=float, help="extremity parameter (envy-worstcase)")
    a.add_argument("--growth", type=float, default=1.001, help="ladder ratio (envy-worstcase)")
    a.add_argument("--base-length", type=int, help="phase-one length (envy-worstcase)")
    a.add_argument("--n", type=int, help="agent count (cr-killer)")
    a.add_argument("--phases", type=_parse_floats, help="phase end rounds (cr-killer)")
    a.add_argument("--variant", type=_variant_arg, default="pace", help="attacked policy (cr-killer)")
    a.add_argument("--upper2", type=float, help="agent-2 projection upper bound (constrained-failure)")
    a.add_argument("--cap", type=float, default=1.0, help="value cap (constrained-failure)")
    a.add_argument("--t", type=int, help="horizon (constrained-failure)")

    p = sub.add_parser("plot", help="render SVGs from a trajectories CSV")
    p.add_argument("csv", help="trajectories CSV written by 'fairpace run'")
    p.add_argument("--out", required=True, help="output directory")
    return ap


def _cmd_gen(args) -> int:
    if args.spec:
        import yaml

        with open(args.spec) as fh:
            d = yaml.safe_load(fh)
        if args.t is not None:
            d["t"] = args.t
        d.setdefault("seed", args.seed)
        spec = model_from_dict(d)
    elif args.model == "iid":
        if args.support is None or args.t is None:
            raise InstanceError("iid model needs --support and --t")
        d = {"type": "iid", "support": args.support, "probs": args.probs, "t": args.t, "seed": args.seed}
        spec = model_from_dict(d)
    elif args.model == "periodic":
        if args.pools is None or args.t is None:
            raise InstanceError("periodic model needs --pools and --t")
        pools = [_parse_matrix(p) for p in args.pools.split("|")]
        spec = model_from_dict({"type": "periodic", "pools": pools, "t": args.t, "seed": args.seed})
    else:
        raise InstanceError("gen needs --spec or --model")
    values = generate(spec, repetition=args.rep)
    save_csv(args.out, values)
    print(f"wrote {values.t} items x {values.n} agents to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_yaml(args.config)
    changes = {}
    if args.reps is not None:
        changes["repetitions"] = args.reps
    if args.tol is not None:
        changes["tolerance"] = args.tol
    if args.checkpoints is not None:
        changes["checkpoints"] = args.checkpoints
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.seed is not None:
        if config.model_spec is None:
            raise InstanceError("--seed only applies to generated instances")
        from dataclasses import replace

        changes["model_spec"] = replace(config.model_spec, seed=args.seed)
    if changes:
        from dataclasses import replace

        config = replace(config, **changes)
    result = run_experiment(config)
    print(f"wrote {result.trajectory_csv}")
    print(f"wrote {result.summary_json}")
    for f in result.svg_files:
        print(f"wrote {f}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.trace) as fh:
        trace = RunTrace.from_json_dict(json.load(fh))
    values = load_csv(args.instance)
    weights = trace.weights
    eq = solve_eg(values, weights, args.tol)
    report = build_report(trace, values, weights, eq.utilities)
    text = report.to_json(indent=1)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_solve(args) -> int:
    values = load_csv(args.instance)
    weights = AgentWeights(np.asarray(args.weights)) if args.weights else AgentWeights.equal(values.n)
    eq = solve_eg(values, weights, args.tol, include_allocation=args.include_allocation)
    text = json.dumps(eq.to_json_dict(include_allocation=args.include_allocation), sort_keys=True, indent=1)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_attack(args) -> int:
    if args.construction == "envy-worstcase":
        if args.eps is None or args.base_length is None:
            raise InstanceError("envy-worstcase needs --eps and --base-length")
        res = adv_envy_worstcase(args.eps, args.growth, args.base_length)
        save_csv(args.out, res.values)
        limit = 1 + 2 * math.log(1 / args.eps) if args.eps < 1 else 1.0
        print(
            json.dumps(
                {
                    "construction": "envy-worstcase",
                    "t": res.values.t,
                    "predicted_envy": res.predicted_envy,
                    "limit_envy": limit,
                    "growth": res.growth,
                    "levels": res.levels,
                },
                sort_keys=True,
            )
        )
    elif args.construction == "cr-killer":
        if args.n is None or args.phases is None:
            raise InstanceError("cr-killer needs --n and --phases")
        res = adv_cr_killer(args.n, [int(x) for x in args.phases], args.variant)
        save_csv(args.out, res.values)
        print(
            json.dumps(
                {
                    "construction": "cr-killer",
                    "policy": variant_label(args.variant),
                    "t": res.values.t,
                    "bound": res.bound,
                    "kill_order": list(res.kill_order),
                    "witness_utilities": list(res.witness_utilities),
                    "policy_utilities": [float(u) for u in res.policy_utilities],
                },
                sort_keys=True,
            )
        )
    else:
        if args.upper2 is None or args.t is None:
            raise InstanceError("constrained-failure needs --upper2 and --t")
        values = adv_constrained_failure(args.upper2, args.cap, args.t)
        save_csv(args.out, values)
        print(
            json.dumps(
                {
                    "construction": "constrained-failure",
                    "t": values.t,
                    "value": float(values.matrix[0, 0]),
                },
                sort_keys=True,
            )
        )
    return 0


def _cmd_plot(args) -> int:
    for path in plot_trajectories(args.csv, args.out):
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "solve": _cmd_solve,
    "attack": _cmd_attack,
    "plot": _cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InstanceError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
