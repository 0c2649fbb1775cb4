"""Command-line front end.

Subcommands: ``gen-data`` writes a synthetic feature CSV, ``run`` executes a
protocol into a self-describing output directory, ``compare`` aligns the
summaries of several finished runs, and ``snapshot-dump`` pretty-prints a
saved model. Exit codes: 0 success, 1 runtime failure, 2 validation failure.

Configuration can come from an INI file (sections [model], [protocol],
[dataset], [output]); command-line flags override file values, and the fully
resolved configuration is echoed into the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from .datasets import (
    Dataset,
    FeatureFileError,
    SyntheticSpec,
    generate_synthetic,
    load_features,
    write_features,
)
from .model import HyperParams
from .protocols import (
    ProtocolSpec,
    run_protocol,
    summarize,
    write_metrics_csv,
    write_timing_csv,
)
from .snapshot import load_snapshot_file


class ValidationError(Exception):
    pass


_HYPER_KEYS = {
    "insertion_threshold": float,
    "habituation_threshold": float,
    "tau_b": float,
    "tau_n": float,
    "kappa": float,
    "eps_b": float,
    "eps_n": float,
    "beta": float,
    "num_contexts": int,
    "alpha": "floats",
    "context_form": str,
}
_PROTOCOL_KEYS = {
    "kind": str,
    "mode": str,
    "replay": "bool",
    "n_max": int,
    "epochs": int,
    "trials": int,
    "seed": int,
    "test_sessions": "ints",
}
_DATASET_KEYS = {
    "source": str,
    "path": str,
    "categories": int,
    "instances": int,
    "sessions": int,
    "dim": int,
    "frames_per_seq": int,
    "cluster_spread": float,
    "walk_step": float,
    "noise": float,
    "data_seed": int,
}
_OUTPUT_KEYS = {
    "dir": str,
    "snapshot": "bool",
    "parallel_trials": int,
}
_SECTIONS = {
    "model": _HYPER_KEYS,
    "protocol": _PROTOCOL_KEYS,
    "dataset": _DATASET_KEYS,
    "output": _OUTPUT_KEYS,
}


def _parse_value(kind, raw: str):
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"not a boolean: {raw!r}")
    if kind == "ints":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if kind == "floats":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return kind(raw)


def _load_config(path: str) -> dict[str, dict]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"config file not found: {path}")
    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValidationError(f"unknown config section [{section}]")
        known = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in known:
                raise ValidationError(f"unknown config key {key!r} in [{section}]")
            try:
                values[section][key] = _parse_value(known[key], raw)
            except ValueError as exc:
                raise ValidationError(f"bad value for {section}.{key}: {exc}") from None
    return values


def _resolve(section: dict, overrides: dict) -> dict:
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _echo_config(path: Path, sections: dict[str, dict]) -> None:
    lines = []
    for name in ("model", "protocol", "dataset", "output"):
        lines.append(f"[{name}]")
        for key in sorted(sections[name]):
            lines.append(f"{key} = {_format_value(sections[name][key])}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")


# -- subcommands --------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    try:
        spec = SyntheticSpec(
            categories=args.categories,
            instances=args.instances,
            sessions=args.sessions,
            dim=args.dim,
            frames_per_seq=args.frames,
            cluster_spread=args.cluster_spread,
            walk_step=args.walk_step,
            noise=args.noise,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    dataset = generate_synthetic(spec, args.seed)
    write_features(dataset, args.out)
    print(
        f"wrote {dataset.num_frames} frames in {len(dataset.sequences)} sequences "
        f"({len(dataset.categories)} categories, {len(dataset.instances)} instances, "
        f"{len(dataset.sessions)} sessions, dim {dataset.dim}) to {args.out}"
    )
    return 0


def _build_dataset(data_cfg: dict) -> tuple[Dataset, dict]:
    source = data_cfg.get("source", "synthetic")
    if source == "file":
        path = data_cfg.get("path")
        if not path:
            raise ValidationError("dataset source 'file' needs a path")
        if not Path(path).is_file():
            raise ValidationError(f"dataset file not found: {path}")
        try:
            dataset = load_features(path)
        except FeatureFileError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        return dataset, {"source": "file", "path": path}
    if source != "synthetic":
        raise ValidationError(f"unknown dataset source {source!r}")
    defaults = SyntheticSpec()
    try:
        spec = SyntheticSpec(
            categories=data_cfg.get("categories", defaults.categories),
            instances=data_cfg.get("instances", defaults.instances),
            sessions=data_cfg.get("sessions", defaults.sessions),
            dim=data_cfg.get("dim", defaults.dim),
            frames_per_seq=data_cfg.get("frames_per_seq", defaults.frames_per_seq),
            cluster_spread=data_cfg.get("cluster_spread", defaults.cluster_spread),
            walk_step=data_cfg.get("walk_step", defaults.walk_step),
            noise=data_cfg.get("noise", defaults.noise),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    data_seed = data_cfg.get("data_seed", 1)
    resolved = {
        "source": "synthetic",
        "data_seed": data_seed,
        "categories": spec.categories,
        "instances": spec.instances,
        "sessions": spec.sessions,
        "dim": spec.dim,
        "frames_per_seq": spec.frames_per_seq,
        "cluster_spread": spec.cluster_spread,
        "walk_step": spec.walk_step,
        "noise": spec.noise,
    }
    return generate_synthetic(spec, data_seed), resolved


def _cmd_run(args) -> int:
    config = _load_config(args.config) if args.config else {s: {} for s in _SECTIONS}

    hyper_cfg = _resolve(
        config["model"],
        {
            "insertion_threshold": args.insertion_threshold,
            "habituation_threshold": args.habituation_threshold,
            "tau_b": args.tau_b,
            "tau_n": args.tau_n,
            "kappa": args.kappa,
            "eps_b": args.eps_b,
            "eps_n": args.eps_n,
            "beta": args.beta,
            "num_contexts": args.contexts,
            "alpha": tuple(float(v) for v in args.alpha.split(",")) if args.alpha else None,
            "context_form": args.context_form,
        },
    )
    proto_cfg = _resolve(
        config["protocol"],
        {
            "kind": args.protocol,
            "mode": args.mode,
            "replay": args.replay,
            "n_max": args.nmax,
            "epochs": args.epochs,
            "trials": args.trials,
            "seed": args.seed,
            "test_sessions": tuple(int(v) for v in args.test_sessions.split(","))
            if args.test_sessions
            else None,
        },
    )
    data_cfg = _resolve(
        config["dataset"],
        {
            "source": "file" if args.data else None,
            "path": args.data,
            "data_seed": args.data_seed,
        },
    )
    out_cfg = _resolve(
        config["output"],
        {
            "dir": args.out,
            "snapshot": True if args.snapshot else None,
            "parallel_trials": args.parallel_trials,
        },
    )

    out_dir = out_cfg.get("dir")
    if not out_dir:
        raise ValidationError("an output directory is required (--out or [output] dir)")
    workers = out_cfg.get("parallel_trials", 1)
    with_snapshots = out_cfg.get("snapshot", False)

    try:
        hyper = HyperParams(**hyper_cfg)
        spec = ProtocolSpec(**{**proto_cfg, "hyper": hyper})
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None

    dataset, data_echo = _build_dataset(data_cfg)
    missing = set(spec.test_sessions) - set(dataset.sessions)
    if missing:
        raise ValidationError(f"test sessions not in dataset: {sorted(missing)}")

    out_path = Path(out_dir)
    if (out_path / "metrics.csv").exists() and not args.force:
        raise ValidationError(
            f"{out_dir} already holds a completed run (use --force to overwrite)"
        )
    out_path.mkdir(parents=True, exist_ok=True)

    result = run_protocol(spec, dataset, workers=workers, with_snapshots=with_snapshots)

    write_metrics_csv(result.records, out_path / "metrics.csv")
    write_timing_csv(result.records, out_path / "timing.csv")
    echo_sections = {
        "model": hyper_cfg
        | {k: getattr(hyper, k) for k in _HYPER_KEYS if k not in hyper_cfg},
        "protocol": {
            "kind": spec.kind,
            "mode": spec.mode,
            "replay": spec.replay,
            "n_max": spec.n_max,
            "epochs": spec.epochs,
            "trials": spec.trials,
            "seed": spec.seed,
            "test_sessions": spec.test_sessions,
        },
        "dataset": data_echo,
        # the directory itself is not echoed so reruns into different
        # directories produce byte-identical outputs
        "output": {
            "snapshot": with_snapshots,
            "parallel_trials": workers,
        },
    }
    summary = summarize(spec, result.records, config_echo={
        name: {k: _format_value(v) for k, v in section.items()}
        for name, section in echo_sections.items()
    })
    with open(out_path / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _echo_config(out_path / "config.resolved.ini", echo_sections)
    if with_snapshots:
        snap_dir = out_path / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for trial, text in result.snapshots.items():
            (snap_dir / f"trial_{trial:03d}.json").write_text(text, encoding="utf-8")

    final = max(r.checkpoint for r in result.records)
    finals = [r.acc_overall for r in result.records if r.checkpoint == final]
    print(
        f"{spec.kind}/{spec.mode}{'+replay' if spec.replay else ''}: "
        f"{spec.trials} trial(s), final overall accuracy "
        f"{sum(finals) / len(finals):.4f} -> {out_dir}"
    )
    return 0


def _cmd_compare(args) -> int:
    summaries = []
    for run_dir in args.run_dirs:
        path = Path(run_dir) / "summary.json"
        if not path.is_file():
            raise ValidationError(f"missing summary.json in {run_dir}")
        with open(path, "r", encoding="utf-8") as fh:
            summaries.append((run_dir, json.load(fh)))

    grids = [tuple(doc["checkpoints"]) for _, doc in summaries]
    if len(set(grids)) != 1:
        detail = "; ".join(f"{d}: {list(g)}" for (d, _), g in zip(summaries, grids))
        raise ValidationError(f"incompatible checkpoint grids: {detail}")
    checkpoints = grids[0]

    names = [d for d, _ in summaries]
    rows = []
    for cp in checkpoints:
        row = [str(cp)]
        for _, doc in summaries:
            cell = doc["by_checkpoint"][str(cp)]["acc_overall"]
            row.append(f"{cell['mean']:.4f}+-{cell['std']:.4f}")
        rows.append(row)

    header = ["checkpoint"] + names
    widths = [max(len(header[i]), max(len(r[i]) for r in rows)) for i in range(len(header))]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))

    final = str(checkpoints[-1])
    base = summaries[0][1]["by_checkpoint"][final]["acc_overall"]["mean"]
    print(f"final checkpoint {final} deltas vs {names[0]}:")
    deltas = []
    for name, doc in summaries:
        mean = doc["by_checkpoint"][final]["acc_overall"]["mean"]
        deltas.append((name, mean, mean - base))
        print(f"  {name}: {mean:.4f} ({mean - base:+.4f})")

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("checkpoint," + ",".join(
            f"{n}_mean,{n}_std" for n in names) + "\n")
        for cp in checkpoints:
            cells = [str(cp)]
            for _, doc in summaries:
                cell = doc["by_checkpoint"][str(cp)]["acc_overall"]
                cells.append(repr(cell["mean"]))
                cells.append(repr(cell["std"]))
            fh.write(",".join(cells) + "\n")
        fh.write("final_delta," + ",".join(
            f"{delta!r}," for _, _, delta in deltas).rstrip(",") + "\n")
    return 0


def _cmd_snapshot_dump(args) -> int:
    path = Path(args.snapshot_path)
    if not path.is_file():
        raise ValidationError(f"snapshot file not found: {path}")
    network, synapses, label_counts = load_snapshot_file(path)
    print(f"snapshot {path}")
    print(f"  mode={network.mode} dim={network.dim} steps={network.step_count}")
    print(f"  neurons={network.num_neurons} edges={len(network.edges)}")
    print(f"  prev_bmu={network.prev_bmu}")
    hyper = network.hyper
    print(
        "  hyper: "
        f"insertion_threshold={hyper.insertion_threshold} "
        f"habituation_threshold={hyper.habituation_threshold} "
        f"tau_b={hyper.tau_b} tau_n={hyper.tau_n} kappa={hyper.kappa} "
        f"eps_b={hyper.eps_b} eps_n={hyper.eps_n} beta={hyper.beta} "
        f"num_contexts={hyper.num_contexts} alpha={list(hyper.alpha)} "
        f"n_max={hyper.n_max} context_form={hyper.context_form}"
    )
    print(f"  transitions recorded: {synapses.total()}")
    print(
        f"  label records: {label_counts.total_records} "
        f"(replay-attributed: {label_counts.replay_records})"
    )
    labeled = sum(1 for i in network.neuron_ids if label_counts.predict(i) is not None)
    print(f"  labeled neurons: {labeled}/{network.num_neurons}")
    if args.neurons:
        for neuron_id in network.neuron_ids:
            unit = network.neuron(neuron_id)
            print(
                f"  neuron {neuron_id}: h={unit.habituation:.4f} "
                f"label={label_counts.predict(neuron_id)!r} "
                f"neighbors={network.neighbors(neuron_id)}"
            )
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwrnet",
        description="Grow-when-required networks: data generation, experiments, comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    data_defaults = SyntheticSpec()
    gen = sub.add_parser("gen-data", help="write a synthetic feature CSV")
    gen.add_argument("--categories", type=int, default=data_defaults.categories)
    gen.add_argument("--instances", type=int, default=data_defaults.instances)
    gen.add_argument("--sessions", type=int, default=data_defaults.sessions)
    gen.add_argument("--dim", type=int, default=data_defaults.dim)
    gen.add_argument("--frames", type=int, default=data_defaults.frames_per_seq)
    gen.add_argument("--cluster-spread", type=float, default=data_defaults.cluster_spread)
    gen.add_argument("--walk-step", type=float, default=data_defaults.walk_step)
    gen.add_argument("--noise", type=float, default=data_defaults.noise)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_data)

    run = sub.add_parser("run", help="execute a training protocol")
    run.add_argument("--config", help="INI configuration file")
    run.add_argument("--protocol", choices=["batch", "incremental"])
    run.add_argument("--mode", choices=["static", "growing"])
    run.add_argument("--replay", action="store_true", default=None)
    run.add_argument("--nmax", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--test-sessions", help="comma-separated session ids")
    run.add_argument("--data", help="feature CSV path (default: synthetic data)")
    run.add_argument("--data-seed", type=int)
    run.add_argument("--insertion-threshold", type=float)
    run.add_argument("--habituation-threshold", type=float)
    run.add_argument("--tau-b", type=float)
    run.add_argument("--tau-n", type=float)
    run.add_argument("--kappa", type=float)
    run.add_argument("--eps-b", type=float)
    run.add_argument("--eps-n", type=float)
    run.add_argument("--beta", type=float)
    run.add_argument("--contexts", type=int, help="temporal depth (number of contexts)")
    run.add_argument("--alpha", help="comma-separated distance weights, length contexts+1")
    run.add_argument("--context-form", choices=["recursive", "literal"])
    run.add_argument("--out")
    run.add_argument("--parallel-trials", type=int)
    run.add_argument("--snapshot", action="store_true", default=None)
    run.add_argument("--force", action="store_true")
    run.set_defaults(func=_cmd_run)

    cmp_parser = sub.add_parser("compare", help="align finished run directories")
    cmp_parser.add_argument("run_dirs", nargs="+")
    cmp_parser.add_argument("--out", default="comparison.csv")
    cmp_parser.set_defaults(func=_cmd_compare)

    dump = sub.add_parser("snapshot-dump", help="pretty-print a model snapshot")
    dump.add_argument("snapshot_path")
    dump.add_argument("--neurons", action="store_true", help="list every neuron")
    dump.set_defaults(func=_cmd_snapshot_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
