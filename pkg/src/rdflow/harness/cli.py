"""Command-line interface.

Subcommands: train, sample, eval, ablate, sweep-knn, report.  Every
command reads an INI config; flags override config keys, and --set
section.key=value reaches anything without a dedicated flag.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ContractViolation, DivergenceError, NumericFailure
from ..fmtrain import load_checkpoint, restore_parameters, save_checkpoint, train
from ..metrics import energy_distance, knn_recall, sliced_w2
from ..seeding import derive_seed
from ..synthdata import sample_target
from ..velocity import build_composite_field
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_echo,
    config_from_echo,
    load_config,
    parse_overrides,
)
from .experiment import (
    RunRecord,
    ablate_adjacency,
    generate_samples,
    run_experiment,
    run_id_for,
    sweep_knn,
)
from .report import emit_report, write_metrics_csv, write_samples_csv, write_scatter_svg, write_sweep_csv


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("-c", "--config", required=config_required, help="INI config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override any config key (repeatable)",
    )
    parser.add_argument("--seed", help="comma-separated seed list (overrides harness.seeds)")
    parser.add_argument("--out", help="output directory (overrides harness.out_dir)")


def _overrides_from_args(args) -> dict[str, dict[str, str]]:
    overrides = parse_overrides(args.set)
    if args.seed:
        overrides.setdefault("harness", {})["seeds"] = args.seed
    if args.out:
        overrides.setdefault("harness", {})["out_dir"] = args.out
    return overrides


def _config_from_args(args) -> ExperimentConfig:
    return load_config(args.config, _overrides_from_args(args))


def _print_record(record: RunRecord) -> None:
    if record.error is not None:
        print(f"{record.run_id}: FAILED ({record.error})")
        return
    print(
        f"{record.run_id}: final_loss={record.final_loss:.6f} "
        f"energy_distance={record.energy_distance:.6f} sliced_w2={record.sliced_w2:.6f} "
        f"knn_recall={record.knn_recall:.4f} nfe={record.nfe_mean:.1f}+-{record.nfe_std:.1f}"
    )


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        rid = run_id_for(cfg, seed)
        field = build_composite_field(cfg.model, seed)
        log = train(field, cfg.dataset, cfg.train, seed)
        echo = config_echo(cfg)
        echo["effective_adjacency"] = field.adjacency_kind
        echo["final_loss"] = log.final_loss(cfg.train.final_window)
        ckpt = out / "checkpoints" / f"{rid}.npz"
        save_checkpoint(ckpt, field, echo, seed)
        log_path = out / "logs" / f"{rid}.train.csv"
        with open(log_path, "w") as handle:
            handle.write("iteration,loss,lr,wall_time_s\n")
            for i in range(len(log.losses)):
                handle.write(
                    f"{log.iterations[i]},{log.losses[i]!r},{log.lrs[i]!r},{log.wall_times[i]!r}\n"
                )
        print(f"{rid}: final_loss={echo['final_loss']:.6f} checkpoint={ckpt}")
    return 0


def _field_from_checkpoint(args):
    params, meta = load_checkpoint(args.checkpoint)
    echo = meta["config"]
    ckpt_cfg = config_from_echo(echo)
    base = _config_from_args(args) if args.config else ckpt_cfg
    cfg = apply_overrides(base, {} if args.config else _overrides_from_args(args))
    # the model and dataset must match the stored parameters, so those
    # always come from the checkpoint itself
    cfg.model = ckpt_cfg.model
    cfg.dataset = ckpt_cfg.dataset
    cfg.validate()
    effective = echo.get("effective_adjacency", cfg.model.adjacency)
    field = build_composite_field(
        cfg.model, meta["seed"],
        force_identity_adjacency=(effective == "identity" and cfg.model.adjacency != "identity"),
    )
    restore_parameters(field, params)
    return field, cfg, meta


def cmd_sample(args) -> int:
    field, cfg, meta = _field_from_checkpoint(args)
    if args.n:
        cfg.eval_samples = args.n
    seed = meta["seed"]
    rid = run_id_for(cfg, seed)
    samples, _, _, trajectory = generate_samples(field, cfg, seed)
    ref = sample_target(cfg.dataset, min(cfg.eval_samples, 2000), derive_seed(seed, "eval-target"))
    record = RunRecord(
        run_id=rid, seed=seed, variant=cfg.model.variant,
        adjacency=field.adjacency_kind, dataset=cfg.dataset.name,
        samples=samples, target_ref=ref.points.data, trajectory=trajectory,
    )
    out = Path(cfg.out_dir)
    csv_path = write_samples_csv([record], out / "samples.csv")
    svg_path = write_scatter_svg(record, out / "plots" / f"{rid}.svg")
    print(f"{rid}: wrote {csv_path} and {svg_path}")
    return 0


def cmd_eval(args) -> int:
    field, cfg, meta = _field_from_checkpoint(args)
    seed = meta["seed"]
    rid = run_id_for(cfg, seed)
    samples, chunk_nfes, wall, _ = generate_samples(field, cfg, seed)
    ref = sample_target(cfg.dataset, cfg.eval_samples, derive_seed(seed, "eval-target"))
    nfe_arr = np.asarray(chunk_nfes, dtype=np.float64)
    record = RunRecord(
        run_id=rid, seed=seed, variant=cfg.model.variant,
        adjacency=field.adjacency_kind, dataset=cfg.dataset.name,
        final_loss=float(meta["config"].get("final_loss", float("nan"))),
        energy_distance=energy_distance(samples, ref.points.data),
        sliced_w2=sliced_w2(samples, ref.points.data, cfg.sliced_projections,
                            seed=derive_seed(seed, "sw2")),
        knn_recall=knn_recall(ref.points.data, samples, cfg.recall_k),
        nfe_mean=float(nfe_arr.mean()), nfe_std=float(nfe_arr.std()),
        time_per_sample_s=wall / cfg.eval_samples,
        params_total=field.param_count(), params_diff=field.diffusion_param_count(),
        samples=samples, target_ref=ref.points.data,
    )
    path = write_metrics_csv([record], Path(cfg.out_dir) / "metrics.csv")
    _print_record(record)
    print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    cfg = _config_from_args(args)
    records = run_experiment(cfg)
    paths = emit_report(records, cfg.out_dir)
    for record in records:
        _print_record(record)
    print(f"wrote {paths['metrics']} and {paths['samples']}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    records = ablate_adjacency(cfg)
    paths = emit_report(records, cfg.out_dir)
    for record in records:
        _print_record(record)
    print(f"wrote {paths['metrics']} and {paths['samples']}")
    return 0


def cmd_sweep_knn(args) -> int:
    cfg = _config_from_args(args)
    k_values = tuple(int(p) for p in args.k_values.split(",") if p.strip())
    per_k = sweep_knn(cfg, k_values)
    records = [r for recs in per_k.values() for r in recs]
    paths = emit_report(records, cfg.out_dir)
    sweep_path = write_sweep_csv(per_k, Path(cfg.out_dir) / "knn_sweep.csv")
    for record in records:
        _print_record(record)
    print(f"wrote {paths['metrics']} and {sweep_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdflow",
        description="Train, sample, and evaluate graph-coupled flow-matching fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model per seed, write checkpoints")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="generate samples from a checkpoint")
    _add_common(p_sample, config_required=False)
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("-n", type=int, default=None, help="number of samples")
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="sample from a checkpoint and compute metrics")
    _add_common(p_eval, config_required=False)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="paired runs: configured adjacency vs identity")
    _add_common(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep-knn", help="repeat the experiment across knn k values")
    _add_common(p_sweep)
    p_sweep.add_argument("--k-values", default="5,10,20", help="comma-separated k list")
    p_sweep.set_defaults(func=cmd_sweep_knn)

    p_report = sub.add_parser("report", help="full pipeline: train, sample, evaluate, emit report")
    _add_common(p_report)
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericFailure, DivergenceError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
