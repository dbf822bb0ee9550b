"""Command-line pipeline: synth | scenario | train | eval | baseline | report.

Outputs are written atomically, every run leaves a manifest with config and
input/output digests sufficient to reproduce it, and identical invocations
produce byte-identical files. Errors exit nonzero with one machine-readable
JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baseline import BaselineConfig, baseline_fit_eval
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    GalleryError,
    NumericError,
    ScenarioError,
    TrainingDivergedError,
)
from .fileio import atomic_write_text, config_digest, sha256_file
from .gallery import load_embeddings, save_embeddings
from .metrics import average_precision, confusion, f1, mcc, roc_auc
from .model import ModelConfig, predict
from .report import (
    EvalReport,
    comparison_table,
    load_report,
    pr_csv,
    roc_csv,
    save_report,
    scores_csv,
)
from .runconfig import RunConfig, resolve_config
from .scenario import (
    ScenarioSpec,
    assemble_examples,
    load_scenario,
    make_scenario,
    save_scenario,
    scenario_snapshot,
)
from .synth import SynthSpec, gen_synthetic
from .train import TrainConfig, train
from .rng import Rng

_ERRORS = (
    CheckpointError,
    ConfigError,
    DataFormatError,
    GalleryError,
    NumericError,
    ScenarioError,
    TrainingDivergedError,
    FileNotFoundError,
)


def _write_manifest(out_dir: Path, command: str, config: RunConfig, inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "inputs": {Path(k).name: v for k, v in inputs.items()},
        "outputs": {Path(k).name: v for k, v in outputs.items()},
    }
    atomic_write_text(
        out_dir / f"{command}_manifest.json",
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )


def _synth_spec(config: RunConfig) -> SynthSpec:
    return SynthSpec(
        n_ids=config["synth.n_ids"],
        walks_per_id=config["synth.walks_per_id"],
        dim=config["synth.dim"],
        centroid_scale=config["synth.centroid_scale"],
        sigma_lo=config["synth.sigma_lo"],
        sigma_hi=config["synth.sigma_hi"],
        normalize=config["synth.normalize"],
        seed=config.seed_for("synth"),
    )


def _model_config(config: RunConfig, input_dim: int) -> ModelConfig:
    return ModelConfig(
        input_dim=input_dim,
        d_model=config["model.d_model"],
        n_layers=config["model.n_layers"],
        n_heads=config["model.n_heads"],
        d_ff=config["model.d_ff"],
        dropout_rate=config["model.dropout_rate"],
        k=config["model.k"],
        scheme=config["model.scheme"],
        seed=config.seed_for("model"),
    )


def _train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=config["train.lr"],
        beta1=config["train.beta1"],
        beta2=config["train.beta2"],
        eps=config["train.eps"],
        batch_size=config["train.batch_size"],
        max_epochs=config["train.max_epochs"],
        patience=config["train.patience"],
        noise_std_rel=config["train.noise_std_rel"],
        episodes_per_epoch=config["train.episodes_per_epoch"],
        pos_weight=config["train.pos_weight"],
        seed=config.seed_for("train"),
    )


def _baseline_config(config: RunConfig) -> BaselineConfig:
    return BaselineConfig(
        mode=config["baseline.mode"],
        k=config["baseline.k"],
        objective=config["baseline.objective"],
    )


def cmd_synth(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    spec = _synth_spec(config)
    records = gen_synthetic(spec)
    out_path = out_dir / "embeddings.jsonl"
    save_embeddings(out_path, records)
    _write_manifest(out_dir, "synth", config, {}, {str(out_path): sha256_file(out_path)})
    print(f"wrote {out_path} ({len(records)} records, dim {spec.dim})")
    return 0


def cmd_scenario(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    records = load_embeddings(args.embeddings)
    ids = sorted({rec.id for rec in records})
    n_train = config["scenario.train_ids"]
    n_val = config["scenario.val_ids"]
    n_eval = config["scenario.eval_ids"]
    if n_train + n_val + n_eval > len(ids):
        raise ScenarioError(
            f"identity split {n_train}+{n_val}+{n_eval} exceeds the "
            f"{len(ids)} identities available"
        )
    base_seed = config.seed_for("scenario")
    rng = Rng(base_seed)
    rng.shuffle(ids)
    pools = {
        "train": set(ids[:n_train]),
        "val": set(ids[n_train : n_train + n_val]),
        "eval": set(ids[n_train + n_val : n_train + n_val + n_eval]),
    }
    by_pool = {
        role: [rec for rec in records if rec.id in pool] for role, pool in pools.items()
    }
    outputs = {}

    def emit(name: str, scenario) -> None:
        path = out_dir / name
        save_scenario(path, scenario)
        outputs[str(path)] = sha256_file(path)

    for idx, (n_ids, n_walks) in enumerate(config["scenario.train_ratios"]):
        spec = ScenarioSpec(
            gallery_ids=n_ids,
            walks_per_id=n_walks,
            pos_probes=config["scenario.pos_probes"],
            neg_probes=config["scenario.neg_probes"],
            seed=base_seed + 1 + idx,
        )
        emit(f"train_{idx:02d}_{n_ids}x{n_walks}.json", make_scenario(by_pool["train"], spec))
    v_ids, v_walks = config["scenario.val_ratio"]
    val_spec = ScenarioSpec(
        gallery_ids=v_ids,
        walks_per_id=v_walks,
        pos_probes=config["scenario.val_pos_probes"],
        neg_probes=config["scenario.val_neg_probes"],
        seed=base_seed + 101,
    )
    emit(f"val_{v_ids}x{v_walks}.json", make_scenario(by_pool["val"], val_spec))
    for idx, (n_ids, n_walks) in enumerate(config["scenario.eval_ratios"]):
        spec = ScenarioSpec(
            gallery_ids=n_ids,
            walks_per_id=n_walks,
            pos_probes=config["scenario.eval_pos_probes"],
            neg_probes=config["scenario.eval_neg_probes"],
            seed=base_seed + 201 + idx,
        )
        emit(f"eval_{idx:02d}_{n_ids}x{n_walks}.json", make_scenario(by_pool["eval"], spec))
    _write_manifest(
        out_dir,
        "scenario",
        config,
        {args.embeddings: sha256_file(args.embeddings)},
        outputs,
    )
    print(f"wrote {len(outputs)} scenario files to {out_dir}")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    records = load_embeddings(args.embeddings)
    scen_dir = Path(args.scenarios)
    train_paths = sorted(scen_dir.glob("train_*.json"))
    val_paths = sorted(scen_dir.glob("val_*.json"))
    if not train_paths:
        raise ScenarioError(f"no train_*.json scenarios found in {scen_dir}")
    if len(val_paths) != 1:
        raise ScenarioError(f"expected exactly one val_*.json in {scen_dir}, found {len(val_paths)}")
    train_scenarios = [load_scenario(p) for p in train_paths]
    val_scenario = load_scenario(val_paths[0])

    input_dim = records[0].vec.size if records else 0
    model_config = _model_config(config, input_dim)
    train_config = _train_config(config)
    result = train(records, model_config, train_scenarios, val_scenario, train_config)

    ckpt_path = out_dir / "checkpoint.bin"
    save_checkpoint(ckpt_path, result.model, config_digest(train_config.to_dict()))
    history_path = out_dir / "history.json"
    atomic_write_text(history_path, json.dumps(result.history, sort_keys=True, indent=2) + "\n")
    inputs = {args.embeddings: sha256_file(args.embeddings)}
    for p in train_paths + val_paths:
        inputs[str(p)] = sha256_file(p)
    _write_manifest(
        out_dir,
        "train",
        config,
        inputs,
        {str(ckpt_path): sha256_file(ckpt_path), str(history_path): sha256_file(history_path)},
    )
    print(
        f"trained {model_config.scheme} model: best epoch {result.best_epoch}, "
        f"val MCC {result.best_val_mcc:.4f}; wrote {ckpt_path}"
    )
    return 0


def _evaluate_checkpoint(records, scenario, model):
    """Score every probe of a scenario in eval mode."""
    _, examples = assemble_examples(records, scenario, model.config.k)
    rows = []
    scores = []
    labels = []
    decisions = []
    for ex in examples:
        prob, decision = predict(model, ex)
        rows.append((ex.probe_id, ex.probe_walk, ex.label, prob, decision))
        scores.append(prob)
        labels.append(ex.label)
        decisions.append(decision)
    return rows, scores, labels, decisions


def cmd_eval(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    records = load_embeddings(args.embeddings)
    scenario = load_scenario(args.scenario)
    model, meta = load_checkpoint(args.checkpoint)
    rows, scores, labels, decisions = _evaluate_checkpoint(records, scenario, model)
    conf = confusion(labels, decisions)
    report = EvalReport(
        name=Path(args.scenario).stem,
        mcc=mcc(conf),
        auc=roc_auc(scores, labels),
        f1=f1(conf),
        ap=average_precision(scores, labels),
        threshold=0.5,
        confusion=conf,
        n_probes=len(labels),
        scenario_spec={
            "gallery_ids": scenario.spec.gallery_ids,
            "walks_per_id": scenario.spec.walks_per_id,
            "pos_probes": scenario.spec.pos_probes,
            "neg_probes": scenario.spec.neg_probes,
            "seed": scenario.spec.seed,
        },
        digests={
            "checkpoint": sha256_file(args.checkpoint),
            "model_config": config_digest(meta["model_config"]),
            "train_config": meta.get("train_config_digest"),
            "embeddings": sha256_file(args.embeddings),
            "scenario": sha256_file(args.scenario),
        },
    )
    report_path = out_dir / "report.json"
    save_report(report_path, report)
    outputs = {str(report_path): sha256_file(report_path)}
    for name, text in (
        ("scores.csv", scores_csv(rows)),
        ("roc.csv", roc_csv(scores, labels)),
        ("pr.csv", pr_csv(scores, labels)),
    ):
        path = out_dir / name
        atomic_write_text(path, text)
        outputs[str(path)] = sha256_file(path)
    _write_manifest(
        out_dir,
        "eval",
        config,
        {
            args.embeddings: sha256_file(args.embeddings),
            args.scenario: sha256_file(args.scenario),
            args.checkpoint: sha256_file(args.checkpoint),
        },
        outputs,
    )
    print(
        f"eval {report.name}: mcc {report.mcc:.4f}, auc {report.auc:.4f}, "
        f"f1 {report.f1:.4f}, ap {report.ap:.4f} over {report.n_probes} probes"
    )
    return 0


def cmd_baseline(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    records = load_embeddings(args.embeddings)
    val_scenario = load_scenario(args.val_scenario)
    test_scenario = load_scenario(args.test_scenario)
    bconfig = _baseline_config(config)

    val_snapshot, val_probe_records = scenario_snapshot(records, val_scenario)
    test_snapshot, test_probe_records = scenario_snapshot(records, test_scenario)
    val_probes = [
        (rec, label) for rec, (_, _, label) in zip(val_probe_records, val_scenario.probes)
    ]
    test_probes = [
        (rec, label) for rec, (_, _, label) in zip(test_probe_records, test_scenario.probes)
    ]
    result = baseline_fit_eval(val_snapshot, val_probes, test_snapshot, test_probes, bconfig)
    report = EvalReport(
        name=f"baseline_{bconfig.mode}_{Path(args.test_scenario).stem}",
        mcc=result["mcc"],
        auc=result["auc"],
        f1=result["f1"],
        ap=result["ap"],
        threshold=result["threshold"],
        confusion=result["confusion"],
        n_probes=len(result["labels"]),
        scenario_spec={
            "gallery_ids": test_scenario.spec.gallery_ids,
            "walks_per_id": test_scenario.spec.walks_per_id,
            "pos_probes": test_scenario.spec.pos_probes,
            "neg_probes": test_scenario.spec.neg_probes,
            "seed": test_scenario.spec.seed,
        },
        digests={
            "baseline_config": config_digest(bconfig.to_dict()),
            "embeddings": sha256_file(args.embeddings),
            "val_scenario": sha256_file(args.val_scenario),
            "test_scenario": sha256_file(args.test_scenario),
        },
    )
    report_path = out_dir / "baseline_report.json"
    save_report(report_path, report)
    rows = [
        (rec.id, rec.walk, label, score, decision)
        for (rec, label), score, decision in zip(
            test_probes, result["scores"], result["decisions"]
        )
    ]
    scores_path = out_dir / "baseline_scores.csv"
    atomic_write_text(scores_path, scores_csv(rows))
    _write_manifest(
        out_dir,
        "baseline",
        config,
        {
            args.embeddings: sha256_file(args.embeddings),
            args.val_scenario: sha256_file(args.val_scenario),
            args.test_scenario: sha256_file(args.test_scenario),
        },
        {
            str(report_path): sha256_file(report_path),
            str(scores_path): sha256_file(scores_path),
        },
    )
    print(
        f"baseline {bconfig.mode}: mcc {report.mcc:.4f}, auc {report.auc:.4f} "
        f"at threshold {report.threshold:.6g}"
    )
    return 0


def cmd_report(args) -> int:
    config = resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    reports = [load_report(p) for p in args.reports]
    csv_text, aligned = comparison_table(reports)
    csv_path = out_dir / "comparison.csv"
    txt_path = out_dir / "comparison.txt"
    atomic_write_text(csv_path, csv_text)
    atomic_write_text(txt_path, aligned)
    _write_manifest(
        out_dir,
        "report",
        config,
        {p: sha256_file(p) for p in args.reports},
        {str(csv_path): sha256_file(csv_path), str(txt_path): sha256_file(txt_path)},
    )
    sys.stdout.write(aligned)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitenroll",
        description="Open-set gait enrollment pipeline over embedding files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )

    p = sub.add_parser("synth", help="generate a synthetic embedding JSONL file")
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("scenario", help="build train/val/eval gallery-probe scenarios")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("train", help="train the enrollment classifier")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scenarios", required=True, help="directory with train_*/val_* scenarios")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a scenario")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="tuned distance-threshold baseline")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--val-scenario", required=True, dest="val_scenario")
    p.add_argument("--test-scenario", required=True, dest="test_scenario")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("report", help="tabulate evaluation reports")
    common(p)
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as exc:
        sys.stderr.write(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n"
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
