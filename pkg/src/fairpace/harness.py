"""Experiment orchestration: configs, runs, aggregation, report files.

A YAML config describes one experiment: an instance source (CSV path or
generator spec), agent weights, the variants to run, a repetition count,
a checkpoint schedule, and the hindsight solver tolerance.  The harness
runs every (repetition, variant) pair, benchmarks against hindsight
prefixes at the checkpoints, and writes:

``trajectories.csv``   long-format relative-regret series, averaged over
                       repetitions (columns tau, variant, agent, value;
                       agent is a name or ``max``/``mean``),
``summary.json``       final metrics per variant (per repetition and
                       averaged),
``relative_regret.svg``one chart with the max and mean series per variant,
``reps/``              per-repetition raw checkpoint tables.

Outputs are a pure function of the config: a second run writes
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .dynamics import Variant, run, variant_from_dict, variant_label
from .eg import hindsight_prefix
from .inputs import (
    Block,
    Corrupted,
    Ergodic,
    FiniteDistribution,
    IID,
    InputModelSpec,
    Periodic,
    gen,
)
from .metrics import build_report, relative_regret_trajectory
from .model import (
    AgentWeights,
    InstanceError,
    ValueSequence,
    load_csv,
    normalize_values,
    save_csv,
)
from .svgplot import write_line_svg


# --------------------------------------------------------------------------
# parsing helpers (shared with the CLI)


def parse_variant(text: str, weights: Optional[AgentWeights] = None) -> Variant:
    """Parse ``name[,key=value,...]`` variant syntax.

    Names: pace, constrained, seeded, setaside, greedy, proportional.
    Examples: ``seeded,seed_utility=0.5``; ``constrained,slack=0.1``.
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise InstanceError("empty variant")
    name, params = parts[0].lower(), {}
    for p in parts[1:]:
        if "=" not in p:
            raise InstanceError(f"malformed variant parameter {p!r}")
        key, val = p.split("=", 1)
        params[key.strip()] = float(val)
    d = {"type": name, **params}
    return variant_from_dict(d, weights)


def parse_checkpoints(spec: Union[str, Sequence[int], None], t: int) -> Tuple[int, ...]:
    """Resolve a checkpoint schedule against horizon ``t``.

    ``pow2`` (default) is every power of two up to ``t`` plus ``t``
    itself; an explicit comma list or int sequence is clipped to
    ``[1, t]``.  The horizon is always included.
    """
    if spec is None or spec == "pow2":
        cps = []
        c = 1
        while c <= t:
            cps.append(c)
            c *= 2
        cps.append(t)
        return tuple(sorted(set(cps)))
    if isinstance(spec, str):
        try:
            items = [int(float(s)) for s in spec.split(",") if s.strip()]
        except ValueError:
            raise InstanceError(f"malformed checkpoint schedule {spec!r}") from None
    else:
        items = [int(x) for x in spec]
    if not items:
        raise InstanceError("empty checkpoint schedule")
    if any(c < 1 for c in items):
        raise InstanceError("checkpoints must be positive")
    return tuple(sorted({c for c in items if c <= t} | {t}))


def _dist_from_dict(d: dict) -> FiniteDistribution:
    support = np.asarray(d["support"], dtype=np.float64)
    if "probs" in d and d["probs"] is not None:
        return FiniteDistribution(support, np.asarray(d["probs"], dtype=np.float64))
    return FiniteDistribution.uniform(support)


def model_from_dict(d: dict) -> InputModelSpec:
    """Build a generator spec from its config-file form."""
    kind = d.get("type")
    if d.get("t") is None:
        raise InstanceError("model spec needs a horizon t")
    t = int(d["t"])
    seed = int(d.get("seed") or 0)
    try:
        if kind == "iid":
            model = IID(_dist_from_dict(d))
        elif kind == "periodic":
            model = Periodic(tuple(np.asarray(p, dtype=np.float64) for p in d["pools"]))
        elif kind == "block":
            model = Block(
                lengths=tuple(int(x) for x in d["lengths"]),
                dists=tuple(_dist_from_dict(b) for b in d["dists"]),
                max_delta=d.get("max_delta"),
            )
        elif kind == "ergodic":
            model = Ergodic(
                states=np.asarray(d["states"], dtype=np.float64),
                transitions=np.asarray(d["transitions"], dtype=np.float64),
                start=int(d.get("start", 0)),
            )
        elif kind == "corrupted":
            model = Corrupted(
                base=_dist_from_dict(d["base"]),
                corruptions={
                    int(r): _dist_from_dict(c)
                    for r, c in dict(d.get("corruptions", {})).items()
                },
                max_delta=d.get("max_delta"),
            )
        else:
            raise InstanceError(f"unknown input model type {kind!r}")
    except KeyError as exc:
        raise InstanceError(f"model spec is missing the {exc.args[0]!r} field") from None
    return InputModelSpec(model=model, t=t, seed=seed)


# --------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment."""

    weights: AgentWeights
    variants: Tuple[Variant, ...]
    output_dir: str
    csv_path: Optional[str] = None
    model_spec: Optional[InputModelSpec] = None
    repetitions: int = 1
    checkpoints: Union[str, Tuple[int, ...], None] = "pow2"
    tolerance: float = 1e-6
    normalize: bool = False
    save_instances: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise InstanceError("repetitions must be at least 1")
        if not self.variants:
            raise InstanceError("need at least one variant")
        if (self.csv_path is None) == (self.model_spec is None):
            raise InstanceError("config needs exactly one of a CSV path or a model spec")
        if not (self.tolerance > 0):
            raise InstanceError("tolerance must be positive")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExperimentConfig":
        inst = d.get("instance", {})
        w = d.get("weights")
        if isinstance(w, dict) and "equal" in w:
            weights = AgentWeights.equal(int(w["equal"]))
        elif w is not None:
            weights = AgentWeights(np.asarray(w, dtype=np.float64))
        else:
            raise InstanceError("config lacks agent weights")
        variants = []
        for v in d.get("variants", []):
            if isinstance(v, str):
                variants.append(parse_variant(v, weights))
            else:
                variants.append(variant_from_dict(dict(v), weights))
        csv_path = inst.get("csv")
        if csv_path is not None and not os.path.isabs(csv_path):
            csv_path = os.path.join(base_dir, csv_path)
        model = inst.get("model")
        spec = None
        if model is not None:
            md = dict(model)
            md.setdefault("t", inst.get("t"))
            md.setdefault("seed", inst.get("seed", 0))
            spec = model_from_dict(md)
        cps = d.get("checkpoints", "pow2")
        if isinstance(cps, list):
            cps = tuple(int(c) for c in cps)
        out = d.get("output_dir", "out")
        if not os.path.isabs(out):
            out = os.path.join(base_dir, out)
        return cls(
            weights=weights,
            variants=tuple(variants),
            output_dir=out,
            csv_path=csv_path,
            model_spec=spec,
            repetitions=int(d.get("repetitions", 1)),
            checkpoints=cps,
            tolerance=float(d.get("tolerance", 1e-6)),
            normalize=bool(inst.get("normalize", d.get("normalize", False))),
            save_instances=bool(d.get("save_instances", False)),
        )

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise InstanceError("config file must hold a mapping")
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


@dataclass(frozen=True)
class ExperimentResult:
    """Paths of everything :func:`run_experiment` wrote."""

    output_dir: str
    trajectory_csv: str
    summary_json: str
    svg_files: Tuple[str, ...]
    rep_files: Tuple[str, ...]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute a config and write its report files.

    Aggregation over repetitions is the arithmetic mean at each
    checkpoint.  On any failure, files written so far are removed and
    the error re-raised with the failing repetition and variant named.
    """
    created: List[str] = []
    out_dir = config.output_dir
    reps_dir = os.path.join(out_dir, "reps")
    os.makedirs(reps_dir, exist_ok=True)
    try:
        return _run_experiment_inner(config, created, out_dir, reps_dir)
    except Exception:
        for path in created:
            try:
                os.remove(path)
            except OSError:
                pass
        raise


def _load_instance(config: ExperimentConfig, rep: int) -> ValueSequence:
    if config.csv_path is not None:
        values = load_csv(config.csv_path)
    else:
        values = gen(config.model_spec, repetition=rep)
    if config.normalize:
        values = normalize_values(values)
    return values


def _run_experiment_inner(
    config: ExperimentConfig, created: List[str], out_dir: str, reps_dir: str
) -> ExperimentResult:
    labels = [variant_label(v) for v in config.variants]
    agent_names: Optional[Tuple[str, ...]] = None
    cps: Optional[Tuple[int, ...]] = None
    # traj[variant][rep] -> list of TrajectoryPoint
    traj: Dict[str, List[list]] = {lab: [] for lab in labels}
    finals: Dict[str, List[dict]] = {lab: [] for lab in labels}
    rep_files: List[str] = []

    for rep in range(config.repetitions):
        values = _load_instance(config, rep)
        if agent_names is None:
            agent_names = values.agents
            cps = parse_checkpoints(config.checkpoints, values.t)
        if config.save_instances:
            inst_path = os.path.join(reps_dir, f"instance_{rep:03d}.csv")
            save_csv(inst_path, values)
            created.append(inst_path)
            rep_files.append(inst_path)
        try:
            prefixes = hindsight_prefix(values, config.weights, cps, config.tolerance)
        except Exception as exc:
            raise RuntimeError(f"repetition {rep}: hindsight benchmark failed: {exc}") from exc
        full = prefixes[-1]
        hindsight_final = full.avg_utilities * values.t
        for variant, label in zip(config.variants, labels):
            try:
                trace = run(values, config.weights, variant, cps)
                points = relative_regret_trajectory(trace, prefixes)
                report = build_report(trace, values, config.weights, hindsight_final)
            except Exception as exc:
                raise RuntimeError(f"repetition {rep}, variant {label}: {exc}") from exc
            traj[label].append(points)
            finals[label].append(report.to_json_dict())
            rep_path = os.path.join(reps_dir, f"rep{rep:03d}_{_safe_name(label)}.csv")
            trace.to_csv(rep_path)
            created.append(rep_path)
            rep_files.append(rep_path)

    # aggregate trajectories over repetitions
    n = len(agent_names)
    reps = config.repetitions
    traj_path = os.path.join(out_dir, "trajectories.csv")
    with open(traj_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["tau", "variant", "agent", "value"])
        for label in labels:
            per_rep = traj[label]
            for k, tau in enumerate(cps):
                rows = [per_rep[r][k] for r in range(reps)]
                for i, name in enumerate(agent_names):
                    vals = [p.per_agent[i] for p in rows]
                    vals = [v for v in vals if not math.isnan(v)]
                    mean = sum(vals) / len(vals) if vals else math.nan
                    wr.writerow([tau, label, name, repr(float(mean))])
                for stat, getter in (("max", lambda p: p.max_value), ("mean", lambda p: p.mean_value)):
                    vals = [getter(p) for p in rows]
                    vals = [v for v in vals if not math.isnan(v)]
                    mean = sum(vals) / len(vals) if vals else math.nan
                    wr.writerow([tau, label, stat, repr(float(mean))])
    created.append(traj_path)

    # summary
    summary = {
        "repetitions": reps,
        "checkpoints": list(cps),
        "agents": list(agent_names),
        "weights": [float(x) for x in config.weights.array],
        "variants": {},
    }
    for label in labels:
        per_rep = finals[label]
        keys = ["competitive_ratio", "utility_ratio", "nash_welfare_alg", "nash_welfare_hindsight"]
        means = {}
        for key in keys:
            vals = [r[key] for r in per_rep if r[key] is not None]
            means[key] = sum(vals) / len(vals) if vals else None
        for key in ["regret", "additive_envy"]:
            stacked = np.array([r[key] for r in per_rep])
            means[key] = [float(v) for v in stacked.mean(axis=0)]
        summary["variants"][label] = {"mean": means, "per_repetition": per_rep}
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    created.append(summary_path)

    # one chart per trajectory metric
    series = []
    for label in labels:
        per_rep = traj[label]
        for stat, getter in (("max", lambda p: p.max_value), ("mean", lambda p: p.mean_value)):
            ys = []
            for k in range(len(cps)):
                vals = [getter(per_rep[r][k]) for r in range(reps)]
                vals = [v for v in vals if not math.isnan(v)]
                ys.append(sum(vals) / len(vals) if vals else math.nan)
            series.append((f"{label}, {stat}", list(cps), ys))
    svg_path = os.path.join(out_dir, "relative_regret.svg")
    write_line_svg(
        svg_path,
        series,
        title="relative time-averaged regret",
        xlabel="round",
        ylabel="relative regret",
    )
    created.append(svg_path)

    return ExperimentResult(
        output_dir=out_dir,
        trajectory_csv=traj_path,
        summary_json=summary_path,
        svg_files=(svg_path,),
        rep_files=tuple(rep_files),
    )


def plot_trajectories(csv_path, out_dir) -> List[str]:
    """Re-render SVGs from a trajectories CSV written by the harness."""
    rows: List[Tuple[int, str, str, float]] = []
    with open(csv_path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["tau", "variant", "agent", "value"]:
            raise InstanceError("unexpected trajectory CSV schema")
        for rec in rd:
            rows.append((int(rec[0]), rec[1], rec[2], float(rec[3])))
    os.makedirs(out_dir, exist_ok=True)
    series: Dict[str, Tuple[List[int], List[float]]] = {}
    for tau, variant, agent, value in rows:
        if agent not in ("max", "mean"):
            continue
        key = f"{variant}, {agent}"
        xs, ys = series.setdefault(key, ([], []))
        xs.append(tau)
        ys.append(value)
    path = os.path.join(out_dir, "relative_regret.svg")
    write_line_svg(
        path,
        [(k, xs, ys) for k, (xs, ys) in sorted(series.items())],
        title="relative time-averaged regret",
        xlabel="round",
        ylabel="relative regret",
    )
    return [path]
