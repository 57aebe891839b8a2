"""Command-line entry point binding configuration files to the experiment modes.

Modes: single (one trial), condition (repeated trials), sweep (parameter
grid), ablation (the four adaptive-channel variants). Every run writes the
engine's file set plus a manifest listing each produced file with its hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import SimulationConfig
from .engine import (
    ConditionResult,
    TrialAbort,
    format_condition_key,
    run_condition,
    run_sweep,
    write_condition_outputs,
)
from .llm_bridge import HttpChatBackend, HttpEmbedder, load_mock_script
from .metrics import HashingEmbedder

# Shorthand parameter names accepted by --set and --sweep.
PARAM_ALIASES = {
    "n": "n_agents",
    "k": "carrying_capacity",
    "r": "growth_rate",
    "alpha": "productivity",
    "c": "consumption",
    "beta": "penalty",
    "gamma": "punish_cost",
    "delta": "selection_strength",
    "sigma": "mutation_sd",
}

ABLATION_VARIANTS = {
    "All": {"social_learning": True, "group_decision": True},
    "OSL": {"social_learning": True, "group_decision": False},
    "OGD": {"social_learning": False, "group_decision": True},
    "Neither": {"social_learning": False, "group_decision": False},
}


@dataclass
class ExperimentSpec:
    mode: str
    config_path: str
    out: str
    trials: int = 1
    seed: Optional[int] = None
    overrides: list[str] = field(default_factory=list)
    backend: Optional[str] = None   # "mock:<path>" | "http:<url>"
    sweep: list[str] = field(default_factory=list)
    jobs: int = 1


def parse_cli(argv: Sequence[str]) -> ExperimentSpec:
    """Parse command-line flags; unknown flags or missing required ones exit
    with a usage error."""
    parser = argparse.ArgumentParser(
        prog="cprsim",
        description="Run common-pool resource society experiments.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON configuration document")
    parser.add_argument("--mode", required=True, choices=["single", "condition", "sweep", "ablation"])
    parser.add_argument("--trials", type=int, default=1, help="trials per condition")
    parser.add_argument("--seed", type=int, default=None, help="override the configured base seed")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a configuration field (repeatable); dotted keys reach nested sections",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--backend", default=None, metavar="mock:<path>|http:<url>")
    parser.add_argument(
        "--sweep",
        action="append",
        default=[],
        metavar="KEY=V1,V2,...",
        help="sweep a parameter over listed values (repeatable; mode=sweep)",
    )
    parser.add_argument("--jobs", type=int, default=1, help="parallel trials per condition")
    args = parser.parse_args(list(argv))
    if args.mode == "sweep" and not args.sweep:
        parser.error("mode=sweep requires at least one --sweep KEY=V1,V2,...")
    return ExperimentSpec(
        mode=args.mode,
        config_path=args.config,
        out=args.out,
        trials=args.trials,
        seed=args.seed,
        overrides=args.overrides,
        backend=args.backend,
        sweep=args.sweep,
        jobs=args.jobs,
    )


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _resolve_key(key: str) -> str:
    return PARAM_ALIASES.get(key, key)


def _apply_override(data: dict, key: str, value) -> None:
    parts = [(_resolve_key(p) if i == 0 else p) for i, p in enumerate(key.split("."))]
    node = data
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def load_config(spec: ExperimentSpec) -> SimulationConfig:
    """Load the JSON config, apply --set overrides, then validate."""
    raw = json.loads(Path(spec.config_path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("configuration document must be a JSON object")
    for item in spec.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, text = item.split("=", 1)
        _apply_override(raw, key.strip(), _parse_value(text.strip()))
    config = SimulationConfig.from_dict(raw)
    if spec.seed is not None:
        config = config.replace(seed=spec.seed)
    return config


def parse_sweep_grid(items: Sequence[str]) -> dict[str, list]:
    grid: dict[str, list] = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"--sweep expects KEY=V1,V2,..., got {item!r}")
        key, values = item.split("=", 1)
        grid[_resolve_key(key.strip())] = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if any(not values for values in grid.values()):
        raise ValueError("sweep parameters need at least one value each")
    return grid


def build_backend(spec: ExperimentSpec, config: SimulationConfig):
    if spec.backend is None:
        return None
    if spec.backend.startswith("mock:"):
        return load_mock_script(spec.backend[len("mock:") :])
    if spec.backend.startswith("http:"):
        url = spec.backend[len("http:") :]
        return HttpChatBackend(config.llm.__class__(**{**config.llm.__dict__, "endpoint_url": url}))
    raise ValueError(f"--backend must be mock:<path> or http:<url>, got {spec.backend!r}")


def build_embedder(config: SimulationConfig):
    if config.embedder.kind == "http":
        return HttpEmbedder(config.embedder)
    return HashingEmbedder(config.embedder.dimension)


def _hash_file(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _write_matrix_csv(path: Path, grid: dict[str, list], results: dict[str, ConditionResult]) -> None:
    """Mean-survival table over the sweep grid: a pivot for two parameters,
    long format otherwise."""
    names = sorted(grid)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if len(names) == 2:
            rows, cols = names
            writer.writerow([f"{rows}/{cols}"] + [str(v) for v in grid[cols]])
            for rv in grid[rows]:
                line = [str(rv)]
                for cv in grid[cols]:
                    key = format_condition_key({rows: rv, cols: cv})
                    line.append(repr(results[key].summary["survival_time"]["mean"]))
                writer.writerow(line)
        else:
            writer.writerow(names + ["mean_survival"])
            import itertools

            for combo in itertools.product(*(grid[n] for n in names)):
                params = dict(zip(names, combo))
                key = format_condition_key(params)
                writer.writerow([str(params[n]) for n in names] + [repr(results[key].summary["survival_time"]["mean"])])


def run_experiment(spec: ExperimentSpec) -> int:
    """Execute one experiment spec; returns a process exit status.

    Partial outputs are kept on failure; the exit status is 0 only when every
    condition completed.
    """
    config = load_config(spec)
    backend = build_backend(spec, config)
    embedder = build_embedder(config) if config.agent_kind == "llm" else None
    if config.agent_kind == "llm" and backend is None:
        raise ValueError("llm societies require --backend mock:<path> or http:<url>")
    outdir = Path(spec.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"mode": spec.mode, "conditions": {}, "files": {}}
    status = 0
    try:
        if spec.mode in ("single", "condition"):
            trials = 1 if spec.mode == "single" else spec.trials
            result = run_condition(
                config, trials, backend=backend, embedder=embedder, condition_key=spec.mode, jobs=spec.jobs
            )
            files = write_condition_outputs(result, outdir)
            manifest["conditions"][spec.mode] = {
                "ablation_flags": dict(config.ablation_flags.__dict__),
                "files": {f.name: _hash_file(f) for f in files},
            }
        elif spec.mode == "sweep":
            grid = parse_sweep_grid(spec.sweep)
            results = run_sweep(config, grid, spec.trials, backend=backend, jobs=spec.jobs)
            for key, result in results.items():
                files = write_condition_outputs(result, outdir / key)
                manifest["conditions"][key] = {
                    "ablation_flags": dict(config.ablation_flags.__dict__),
                    "files": {str(Path(key) / f.name): _hash_file(f) for f in files},
                }
            matrix_path = outdir / "survival_matrix.csv"
            _write_matrix_csv(matrix_path, grid, results)
        elif spec.mode == "ablation":
            for name, flags in ABLATION_VARIANTS.items():
                variant_flags = config.ablation_flags.__class__(
                    social_learning=flags["social_learning"],
                    group_decision=flags["group_decision"],
                    punishment=config.ablation_flags.punishment,
                )
                variant_config = config.replace(ablation_flags=variant_flags)
                result = run_condition(
                    variant_config, spec.trials, backend=backend, embedder=embedder, condition_key=name, jobs=spec.jobs
                )
                files = write_condition_outputs(result, outdir / name)
                manifest["conditions"][name] = {
                    "ablation_flags": dict(variant_flags.__dict__),
                    "files": {str(Path(name) / f.name): _hash_file(f) for f in files},
                }
        else:
            raise ValueError(f"unknown mode {spec.mode!r}")
    except TrialAbort as exc:
        print(f"trial aborted: {exc}", file=sys.stderr)
        status = 1
    for condition in manifest["conditions"].values():
        manifest["files"].update(condition["files"])
    matrix = outdir / "survival_matrix.csv"
    if matrix.exists():
        manifest["files"]["survival_matrix.csv"] = _hash_file(matrix)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    spec = parse_cli(sys.argv[1:] if argv is None else argv)
    return run_experiment(spec)


if __name__ == "__main__":
    sys.exit(main())
