"""Experiment runner CLI.

Subcommands:
  run <config>       execute every run descriptor (sweep axes x seeds) and
                     write records-<run>.jsonl, curve-<run>.csv and a
                     sweep-level summary.json into the output directory.
  validate <config>  resolve and validate the config, report the descriptor
                     count, write nothing.

`--print-defaults` dumps the canonical default configuration as JSON.
Every output file embeds the resolved config hash and the seed, and a rerun
with the same config and seed produces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import (
    ConfigError,
    ExperimentConfig,
    RunDescriptor,
    config_hash,
    parse_config,
    resolved_defaults,
    run_descriptors,
)
from .core import RngStream, SimulationError
from .learning import (
    LabeledDataset,
    MlpNet,
    NativeTrainer,
    SurrogateTrainer,
    Trainer,
    load_dataset,
    make_blob_dataset,
    partition_dataset,
)
from .metrics import atomic_write_text, summarize, write_curve_csv, write_records_jsonl
from .protocol import RoundRecord, run_experiment
from .resources import ClientProfile, generate_profiles

__all__ = ["main", "execute_run", "build_trainer"]


def build_trainer(
    config: ExperimentConfig, profiles: list[ClientProfile], rng: RngStream
) -> Trainer:
    """Instantiate the configured trainer for one run."""
    spec = config.resolved["trainer"]
    if spec["kind"] == "surrogate":
        s = spec["surrogate"]
        return SurrogateTrainer(a_max=s["a_max"], tau=s["tau"])

    native = spec["native"]
    if native["dataset_path"] is not None:
        train = load_dataset(native["dataset_path"])
        if native["test_dataset_path"] is not None:
            test = load_dataset(native["test_dataset_path"])
        else:
            # Deterministic 80/20 split by index.
            cut = max(1, int(0.8 * len(train)))
            test = LabeledDataset(train.features[cut:], train.labels[cut:], train.n_classes)
            train = LabeledDataset(train.features[:cut], train.labels[:cut], train.n_classes)
    else:
        # One draw for train plus test keeps the class centroids shared.
        total = native["train_samples"] + native["test_samples"]
        full = make_blob_dataset(
            total,
            native["n_features"],
            native["n_classes"],
            rng.child("dataset").generator(),
            spread=native["blob_spread"],
        )
        cut = native["train_samples"]
        train = LabeledDataset(full.features[:cut], full.labels[:cut], full.n_classes)
        test = LabeledDataset(full.features[cut:], full.labels[cut:], full.n_classes)

    part_cfg = config.resolved["partition"]
    partition = partition_dataset(
        train,
        profiles,
        part_cfg["mode"],
        rng.child("partition").generator(),
        classes_per_client=part_cfg["classes_per_client"],
    )
    net = MlpNet(
        n_features=train.features.shape[1],
        n_classes=train.n_classes,
        hidden=tuple(native["hidden"]),
    )
    return NativeTrainer(
        train_set=train,
        test_set=test,
        partition=partition,
        net=net,
        hyper=config.sgd_hyper(),
        init_rng=rng.child("model-init").generator(),
    )


def execute_run(config: ExperimentConfig, seed: int) -> list[RoundRecord]:
    """Run one experiment end to end for a single seed."""
    rng = RngStream(seed)
    protocol = config.protocol()
    profiles = generate_profiles(protocol.k_total, config.cell(), config.ranges(), rng)
    trainer = build_trainer(config, profiles, rng)
    return run_experiment(protocol, config.stop(), trainer, profiles, rng)


def _execute_descriptor(payload: dict) -> dict:
    """Worker entry: run one descriptor and write its per-run files."""
    try:
        config = ExperimentConfig(payload["resolved"])
        records = execute_run(config, payload["seed"])
        header = {
            "config_hash": config.hash,
            "seed": payload["seed"],
            "run_id": payload["run_id"],
        }
        out_dir = Path(payload["out_dir"])
        write_records_jsonl(records, out_dir / f"records-{payload['run_id']}.jsonl", header)
        write_curve_csv(records, out_dir / f"curve-{payload['run_id']}.csv", header)
        return {
            "run_id": payload["run_id"],
            "group_id": payload["group_id"],
            "seed": payload["seed"],
            "records": [r.as_dict() for r in records],
        }
    except Exception as exc:  # a failed run aborts only this descriptor
        return {
            "run_id": payload["run_id"],
            "group_id": payload["group_id"],
            "seed": payload["seed"],
            "error": f"{type(exc).__name__}: {exc}",
        }


def _payloads(descriptors: list[RunDescriptor], out_dir: Path) -> list[dict]:
    return [
        {
            "run_id": d.run_id,
            "group_id": d.group_id,
            "seed": d.seed,
            "resolved": d.resolved,
            "out_dir": str(out_dir),
        }
        for d in descriptors
    ]


def _cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    if args.seed is not None:
        config.resolved["seeds"] = [args.seed]
    if args.out is not None:
        config.resolved["output_dir"] = args.out

    out_dir = Path(config.resolved["output_dir"])
    if out_dir.exists() and not args.force:
        print(f"error: output directory {out_dir} exists (use --force to overwrite)", file=sys.stderr)
        return 1

    descriptors = run_descriptors(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    payloads = _payloads(descriptors, out_dir)

    if args.parallelism > 1:
        with ProcessPoolExecutor(max_workers=args.parallelism) as pool:
            results = list(pool.map(_execute_descriptor, payloads))
    else:
        results = [_execute_descriptor(p) for p in payloads]

    failures = {r["run_id"]: r["error"] for r in results if "error" in r}
    groups: dict[str, list[list[RoundRecord]]] = {}
    for r in results:
        if "error" in r:
            continue
        groups.setdefault(r["group_id"], []).append(
            [RoundRecord.from_dict(raw) for raw in r["records"]]
        )

    thresholds = config.thresholds()
    summary = {
        "config_hash": config.hash,
        "seeds": config.resolved["seeds"],
        "groups": {
            group: summarize(runs, thresholds).as_dict() for group, runs in sorted(groups.items())
        },
        "failed_runs": dict(sorted(failures.items())),
    }
    atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

    for group in sorted(groups):
        s = summary["groups"][group]
        print(
            f"{group}: clients/round={s['mean_clients_per_round']:.2f} "
            f"(std {s['std_clients_per_round']:.2f}), "
            f"rounds={s['rounds_completed_mean']:.1f}, "
            f"final_accuracy={s['final_accuracy_mean']:.4f}"
        )
    for run_id, error in sorted(failures.items()):
        print(f"FAILED {run_id}: {error}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    descriptors = run_descriptors(config)
    print(f"OK: {len(descriptors)} run descriptor(s), config hash {config.hash}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedcs-sim",
        description="Deadline-constrained federated-learning simulator",
    )
    parser.add_argument(
        "--print-defaults",
        action="store_true",
        help="dump the canonical default configuration as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="execute a config's sweep")
    run_p.add_argument("config", help="path to a JSON config file")
    run_p.add_argument("--seed", type=int, default=None, help="replace the seed list with one seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--force", action="store_true", help="write into an existing directory")
    run_p.add_argument("--parallelism", type=int, default=1, help="worker processes (default 1)")

    val_p = sub.add_parser("validate", help="check a config without running it")
    val_p.add_argument("config", help="path to a JSON config file")

    args = parser.parse_args(argv)

    if args.print_defaults:
        print(json.dumps(resolved_defaults(), indent=2, sort_keys=True))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
