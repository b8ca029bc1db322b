"""Command-line entry points.

Subcommands: generate (write a synthetic dataset), train (fit a model on a
dataset file), attribute (score and render attribution maps), benchmark
(run a full trial sweep), report (similarity heatmaps and box-plot tables).

Every command reads one JSON config document with per-command sections,
rejects unknown keys, writes a manifest echoing the fully-resolved config,
and produces byte-identical outputs for identical inputs. Exit code 1 means
a configuration problem, 2 a runtime failure. The GRATTR_THREADS environment
variable caps benchmark worker processes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .attribution import METHODS, attribute
from .benchmark import (TaskSpec, TrialPlan, generate_dataset, quantile,
                        run_trials)
from .data import load_dataset, write_dataset
from .metrics import cosine_matrix
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint
from .graphs import make_batch
from .regularizers import RegularizerConfig
from .render import render_heatmap_svg, render_svg
from .smiles import ALPHABET_SIZE as SMILES_ALPHABET_SIZE, ATOM_ALPHABET
from .training import TrainConfig, train


class ConfigError(Exception):
    """Bad configuration; reported with exit code 1."""


_TASK_KEYS = {"kind", "num_graphs", "size_range", "alphabet_size",
              "contribution_table", "seed", "name"}
_MODEL_KEYS = {"num_conv_layers", "hidden_dim", "max_degree", "head_activation",
               "seed", "alphabet_size"}
_TRAIN_KEYS = {"epochs", "batch_size", "base_lr", "decay_base", "decay_every",
               "adam_beta1", "adam_beta2", "adam_eps", "seed"}
_REG_KEYS = {"mode", "lam", "m", "g_floor"}
_PLAN_KEYS = {"tasks", "constraints", "methods", "seeds", "test_fraction"}
_ATTRIBUTE_KEYS = {"methods", "task_index", "render_count", "seed"}
_REPORT_KEYS = {"results", "checkpoints", "dataset", "graph_index"}

_SECTIONS_BY_COMMAND = {
    "generate": {"task"},
    "train": {"dataset", "model", "train", "regularizers"},
    "attribute": {"dataset", "checkpoint", "attribute"},
    "benchmark": {"plan", "model", "train", "regularizers"},
    "report": {"report"},
}
_KEYS_BY_SECTION = {
    "task": _TASK_KEYS,
    "model": _MODEL_KEYS,
    "train": _TRAIN_KEYS,
    "regularizers": _REG_KEYS,
    "plan": _PLAN_KEYS,
    "attribute": _ATTRIBUTE_KEYS,
    "report": _REPORT_KEYS,
}


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"config section {path!r} must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config field {path + '.' + key!r}")


def _load_config(path: str, command: str) -> dict:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        config = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
    allowed_sections = _SECTIONS_BY_COMMAND[command]
    _check_keys(config, allowed_sections, command)
    for section, keys in _KEYS_BY_SECTION.items():
        if section in config and isinstance(config.get(section), dict):
            _check_keys(config[section], keys, f"{command}.{section}")
    if command == "benchmark":
        for idx, task in enumerate(config.get("plan", {}).get("tasks", [])):
            _check_keys(task, _TASK_KEYS, f"{command}.plan.tasks[{idx}]")
    return config


def _task_spec(raw: dict, seed_override: int | None) -> TaskSpec:
    raw = dict(raw)
    if "size_range" in raw:
        raw["size_range"] = tuple(raw["size_range"])
    if raw.get("contribution_table") is not None:
        raw["contribution_table"] = tuple(raw["contribution_table"])
    if seed_override is not None:
        raw["seed"] = seed_override
    if "kind" not in raw:
        raise ConfigError("task.kind is required")
    try:
        return TaskSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad task spec: {exc}") from exc


def _infer_alphabet(dataset) -> int:
    if any(g.smiles is not None for g in dataset.graphs):
        return SMILES_ALPHABET_SIZE
    return max(max(g.node_labels) for g in dataset.graphs) + 1


def _write(path: Path, text: str, quiet: bool) -> None:
    path.write_text(text, encoding="utf-8")
    if not quiet:
        print(f"wrote {path}")


def _write_manifest(out_dir: Path, command: str, resolved: dict,
                    seed_override: int | None, quiet: bool) -> None:
    manifest = {"command": command, "config": resolved, "seed_override": seed_override}
    _write(out_dir / "manifest.json",
           json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n", quiet)


def _float6(x: float) -> str:
    return format(float(x), ".6g")


def emit_csv(results, path) -> None:
    """Write trial results as CSV, one row per (trial, method).

    Header row, rows sorted by (task, constraint, seed, method), floats with
    six significant digits. Failed trials carry no metric rows.
    """
    if not results:
        raise ValueError("emit_csv requires non-empty results")
    rows = []
    for r in results:
        for method in sorted(r.attr_metrics):
            rows.append((r.task, r.constraint, r.seed, r.model_metric,
                         method, r.attr_metrics[method]))
    rows.sort(key=lambda row: (row[0], row[1], row[2], row[4]))
    lines = ["task,constraint,seed,model_metric,method,attr_metric"]
    for task, constraint, seed, model_metric, method, attr_metric in rows:
        lines.append(f"{task},{constraint},{seed},{_float6(model_metric)},"
                     f"{method},{_float6(attr_metric)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_generate(config: dict, out_dir: Path, seed: int | None, quiet: bool) -> None:
    if "task" not in config:
        raise ConfigError("generate requires a 'task' section")
    spec = _task_spec(config["task"], seed)
    dataset = generate_dataset(spec)
    write_dataset(dataset, out_dir / "dataset.jsonl")
    if not quiet:
        print(f"wrote {out_dir / 'dataset.jsonl'} ({len(dataset)} graphs)")
    _write_manifest(out_dir, "generate", {"task": asdict(spec)}, seed, quiet)


def _model_config(config: dict, dataset, seed: int | None) -> ModelConfig:
    raw = dict(config.get("model", {}))
    alphabet = raw.pop("alphabet_size", None) or _infer_alphabet(dataset)
    if seed is not None:
        raw["seed"] = seed
    try:
        return ModelConfig(num_tasks=max(dataset.num_tasks, 1),
                           alphabet_size=alphabet, **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model config: {exc}") from exc


def _train_config(config: dict, seed: int | None) -> TrainConfig:
    raw = dict(config.get("train", {}))
    if seed is not None:
        raw["seed"] = seed
    try:
        return TrainConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


def _reg_config(config: dict, allow_mode: bool = True) -> RegularizerConfig:
    raw = dict(config.get("regularizers", {}))
    if not allow_mode and "mode" in raw:
        raise ConfigError("regularizers.mode is set per constraint in a benchmark plan")
    try:
        return RegularizerConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad regularizer config: {exc}") from exc


def _cmd_train(config: dict, out_dir: Path, seed: int | None, quiet: bool) -> None:
    if "dataset" not in config:
        raise ConfigError("train requires a 'dataset' path")
    dataset = load_dataset(config["dataset"])
    if len(dataset) == 0:
        raise ConfigError(f"dataset {config['dataset']} is empty")
    model_cfg = _model_config(config, dataset, seed)
    train_cfg = _train_config(config, seed)
    reg_cfg = _reg_config(config)
    params, history = train(dataset, model_cfg, train_cfg, reg_cfg)
    save_checkpoint(out_dir / "checkpoint.json", model_cfg, params)
    history.write_csv(out_dir / "history.csv")
    if not quiet:
        print(f"wrote {out_dir / 'checkpoint.json'} and {out_dir / 'history.csv'}")
    resolved = {
        "dataset": config["dataset"],
        "model": asdict(model_cfg),
        "train": asdict(train_cfg),
        "regularizers": asdict(reg_cfg),
    }
    _write_manifest(out_dir, "train", resolved, seed, quiet)


def _cmd_attribute(config: dict, out_dir: Path, seed: int | None, quiet: bool) -> None:
    for required in ("dataset", "checkpoint"):
        if required not in config:
            raise ConfigError(f"attribute requires a {required!r} path")
    dataset = load_dataset(config["dataset"])
    model_cfg, params = load_checkpoint(config["checkpoint"])
    section = dict(config.get("attribute", {}))
    methods = tuple(section.get("methods", ("cam", "toprep")))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown attribution method {m!r}")
    task_index = int(section.get("task_index", 0))
    if not 0 <= task_index < model_cfg.num_tasks:
        raise ConfigError(f"task_index {task_index} out of range for "
                          f"{model_cfg.num_tasks} tasks")
    render_count = int(section.get("render_count", 2))
    rng_seed = seed if seed is not None else int(section.get("seed", 0))
    lines = []
    for method in methods:
        rng = np.random.default_rng([rng_seed, 0x7A])
        for idx, graph in enumerate(dataset.graphs):
            amap = attribute(params, model_cfg, graph, method,
                             task_index=task_index, rng=rng, graph_ref=idx)
            lines.append(json.dumps(amap.to_json_record(), sort_keys=True,
                                    separators=(",", ":")))
            if idx < render_count:
                names = ATOM_ALPHABET if graph.smiles is not None else None
                _write(out_dir / f"graph{idx:03d}_{method}.svg",
                       render_svg(graph, amap, label_names=names), quiet)
    _write(out_dir / "attributions.jsonl", "\n".join(lines) + "\n", quiet)
    resolved = {
        "dataset": config["dataset"],
        "checkpoint": config["checkpoint"],
        "attribute": {"methods": list(methods), "task_index": task_index,
                      "render_count": render_count, "seed": rng_seed},
    }
    _write_manifest(out_dir, "attribute", resolved, seed, quiet)


def _cmd_benchmark(config: dict, out_dir: Path, seed: int | None, quiet: bool) -> None:
    if "plan" not in config:
        raise ConfigError("benchmark requires a 'plan' section")
    section = dict(config["plan"])
    raw_tasks = section.get("tasks")
    if not raw_tasks:
        raise ConfigError("benchmark.plan.tasks must be a non-empty list")
    tasks = tuple(_task_spec(t, None) for t in raw_tasks)
    seeds = tuple(int(s) for s in section.get("seeds", range(10)))
    if seed is not None:
        seeds = (seed,)
    model_section = dict(config.get("model", {}))
    model_cfg = None
    if model_section:
        alphabet = model_section.pop("alphabet_size", None) or tasks[0].alphabet_size
        try:
            model_cfg = ModelConfig(num_tasks=1, alphabet_size=alphabet, **model_section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc
    try:
        plan = TrialPlan(
            tasks=tasks,
            constraints=tuple(section.get("constraints", ("none", "bro", "gini", "both"))),
            methods=tuple(section.get("methods",
                                      ("cam", "toprep", "gradcam_last", "gradcam_all", "random"))),
            seeds=seeds,
            model_cfg=model_cfg,
            train_cfg=_train_config(config, None),
            reg_cfg=_reg_config(config, allow_mode=False),
            test_fraction=float(section.get("test_fraction", 0.2)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad trial plan: {exc}") from exc
    results, summary = run_trials(plan)
    emit_csv(results, out_dir / "results.csv")
    _write(out_dir / "summary.json",
           json.dumps(summary, sort_keys=True, separators=(",", ":")) + "\n", quiet)
    if not quiet:
        print(f"wrote {out_dir / 'results.csv'} ({len(results)} trials)")
    resolved = {
        "plan": {
            "tasks": [asdict(t) for t in plan.tasks],
            "constraints": list(plan.constraints),
            "methods": list(plan.methods),
            "seeds": list(plan.seeds),
            "test_fraction": plan.test_fraction,
        },
        "model": asdict(plan.model_cfg) if plan.model_cfg else {},
        "train": asdict(plan.train_cfg),
        "regularizers": asdict(plan.reg_cfg),
    }
    _write_manifest(out_dir, "benchmark", resolved, seed, quiet)


def _boxplot_table(results_path: str) -> str:
    with open(results_path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        raise ValueError(f"no rows in {results_path}")
    groups: dict[tuple[str, str, str], list[float]] = {}
    for row in rows:
        key = (row["task"], row["constraint"], row["method"])
        groups.setdefault(key, []).append(float(row["attr_metric"]))
    lines = ["task,constraint,method,n,mean,min,q1,median,q3,max"]
    for key in sorted(groups):
        values = np.asarray(groups[key])
        stats = [values.mean(), values.min(), quantile(values, 0.25),
                 quantile(values, 0.5), quantile(values, 0.75), values.max()]
        lines.append(",".join([key[0], key[1], key[2], str(values.size)]
                              + [_float6(v) for v in stats]))
    return "\n".join(lines) + "\n"


def _cmd_report(config: dict, out_dir: Path, seed: int | None, quiet: bool) -> None:
    section = dict(config.get("report", {}))
    if not section.get("results") and not section.get("checkpoints"):
        raise ConfigError("report needs 'report.results' and/or 'report.checkpoints'")
    if section.get("results"):
        _write(out_dir / "boxplot_data.csv", _boxplot_table(section["results"]), quiet)
    checkpoints = section.get("checkpoints") or {}
    dataset = load_dataset(section["dataset"]) if section.get("dataset") else None
    graph_index = int(section.get("graph_index", 0))
    for label in sorted(checkpoints):
        model_cfg, params = load_checkpoint(checkpoints[label])
        task_names = (dataset.task_names if dataset and dataset.num_tasks
                      == model_cfg.num_tasks
                      else tuple(f"task_{j}" for j in range(model_cfg.num_tasks)))
        weight_sim = cosine_matrix(params.output_weights, task_names)
        _write(out_dir / f"weights_cosine_{label}.svg",
               render_heatmap_svg(weight_sim, f"output-weight row cosine ({label})"),
               quiet)
        if dataset is not None and len(dataset) > graph_index:
            graph = dataset.graphs[graph_index]
            batch = make_batch([graph], model_cfg.alphabet_size, model_cfg.max_degree)
            embeddings = forward(params, batch, config=model_cfg).final_embeddings.data
            node_labels = tuple(f"n{i}" for i in range(graph.num_nodes))
            emb_sim = cosine_matrix(embeddings, node_labels)
            _write(out_dir / f"embeddings_cosine_{label}.svg",
                   render_heatmap_svg(emb_sim, f"node-embedding cosine ({label})"),
                   quiet)
    _write_manifest(out_dir, "report", {"report": section}, seed, quiet)


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "attribute": _cmd_attribute,
    "benchmark": _cmd_benchmark,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grattr",
        description="Train graph networks with attribution-friendly constraints, "
                    "explain predictions, and benchmark attribution quality.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "write a synthetic benchmark dataset"),
        ("train", "train a model on a dataset file"),
        ("attribute", "compute and render attribution maps"),
        ("benchmark", "run the trial sweep and summarize"),
        ("report", "render similarity heatmaps and box-plot tables"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
        cmd.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config, args.command)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](config, out_dir, args.seed, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
