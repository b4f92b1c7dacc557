"""Command-line driver: load a model and a platform, run an optimiser, and
write the report, the exported design and plot-ready trajectory data.

Exit codes: 0 success, 10 input/parse error, 20 infeasible initial design,
21 no feasible design exists, 30 design space above the brute-force cap.

report.json is byte-identical across runs with the same configuration and
seed; wall times and timestamps live in a separate metadata.json.
"""

from __future__ import annotations

import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click

from . import __version__
from .backends import BACKENDS, BackendDescriptor, UnsupportedLayerError, \
    design_objective, export_design, get_backend
from .evaluation import Platform, PlatformError, design_space_size, \
    evaluate_design, load_platform
from .hdgraph import build_hdgraph
from .network import ParseError, load_network
from .optimizers import AnnealingConfig, InfeasibleInitialError, \
    NoFeasibleDesignError, OptimiserResult, SpaceTooLargeError, brute_force, \
    rule_based, simulated_annealing

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_PARSE_ERROR = 10
EXIT_INFEASIBLE_INITIAL = 20
EXIT_NO_FEASIBLE_DESIGN = 21
EXIT_SPACE_TOO_LARGE = 30

# deterministic default for the minimum-temperature phase; a wall-clock
# budget would make report.json irreproducible
DEFAULT_CLI_SA_ITERATIONS = 2000


@dataclass(frozen=True)
class RunConfig:
    model_path: str
    platform_path: str
    output_dir: str
    backend: str = "fpgaconvnet-like"
    optimiser: str = "rule"
    objective: str = "latency"
    batch_size: int = 256
    seed: int = 0
    annealing: AnnealingConfig | None = None
    report_formats: frozenset[str] = frozenset({"json"})
    brute_force_cap: int = 10_000_000
    jobs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.optimiser not in ("brute", "annealing", "rule"):
            raise ValueError(f"unknown optimiser '{self.optimiser}'")
        if self.objective not in ("latency", "throughput"):
            raise ValueError(f"unknown objective '{self.objective}'")
        if not self.report_formats <= {"json", "csv"}:
            raise ValueError("report_formats may only contain 'json' and 'csv'")


def _format_float(value: float) -> str:
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"cannot serialise non-finite value {value}")
    return f"{value:.17g}"


def _dump_json(value, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits so reals round-trip exactly."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = ",\n".join(
            f'{inner}"{key}": {_dump_json(val, indent + 1)}'
            for key, val in value.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = ",\n".join(f"{inner}{_dump_json(v, indent + 1)}" for v in value)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if value is None:
        return "null"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _resource_pct(used: int, cap: int) -> float | None:
    if cap == 0:
        return None if used else 0.0
    return 100.0 * used / cap


def _build_report(config: RunConfig, point, platform: Platform,
                  backend: BackendDescriptor, result: OptimiserResult,
                  space: int) -> dict:
    evaluation = evaluate_design(point, platform, config.objective,
                                 config.batch_size)
    total_latency = sum(m.latency_s for m in evaluation.per_partition)
    n_cuts = len(point.cutset.cuts)
    execution_s = config.batch_size * total_latency
    reconfiguration_s = n_cuts * platform.reconfig_time_s
    throughput = config.batch_size / (config.batch_size * total_latency
                                      + n_cuts * platform.reconfig_time_s)
    partitions = []
    for idx, (part, metrics) in enumerate(
            zip(point.partitions(), evaluation.per_partition)):
        used = metrics.resources.as_dict()
        caps = platform.resources.as_dict()
        partitions.append({
            "index": idx,
            "layers": [point.graph.nodes[i].layer.name for i in part.node_indices],
            "latency_s": metrics.latency_s,
            "resources": used,
            "resource_pct": {c: _resource_pct(used[c], caps[c]) for c in used},
            "bandwidth_bytes_per_s": metrics.bandwidth_bytes_per_s,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "model": Path(config.model_path).name,
            "platform": platform.name,
            "backend": config.backend,
            "optimiser": config.optimiser,
            "objective": config.objective,
            "batch_size": config.batch_size,
            "seed": config.seed,
        },
        "design_space_size": space,
        "objective_value": result.best_objective,
        "latency_s": total_latency + reconfiguration_s,
        "throughput_imgs_per_s": throughput,
        "cut_edges": list(point.cutset.cuts),
        "partitions": partitions,
        "time_breakdown": {
            "execution_s": execution_s,
            "reconfiguration_s": reconfiguration_s,
            "batch_makespan_s": execution_s + reconfiguration_s,
        },
        "evaluations": result.evaluations,
        "trajectory": [[i, obj] for i, obj in result.trajectory],
        "design": export_design(point, backend, platform),
    }


def _write_outputs(config: RunConfig, report: dict, result: OptimiserResult):
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(_dump_json(report) + "\n", encoding="utf-8")
    (out / "design.json").write_text(
        _dump_json(report["design"]) + "\n", encoding="utf-8")
    with open(out / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        writer.writerows(result.trajectory)
    if "csv" in config.report_formats:
        with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["partition", "layers", "latency_s", "dsp", "bram",
                             "lut", "ff", "bandwidth_bytes_per_s"])
            for part in report["partitions"]:
                res = part["resources"]
                writer.writerow([
                    part["index"], " ".join(part["layers"]), part["latency_s"],
                    res["dsp"], res["bram"], res["lut"], res["ff"],
                    part["bandwidth_bytes_per_s"],
                ])
    metadata = {
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": result.wall_time_s,
        "streamfold_version": __version__,
    }
    (out / "metadata.json").write_text(_dump_json(metadata) + "\n", encoding="utf-8")


def _optimise(config: RunConfig) -> tuple[dict, OptimiserResult]:
    model = load_network(config.model_path)
    platform = load_platform(config.platform_path)
    backend = get_backend(config.backend)
    graph = build_hdgraph(model, backend)
    space = design_space_size(graph)
    if config.optimiser == "brute":
        result = brute_force(graph, platform, config.objective,
                             config.batch_size, cap=config.brute_force_cap,
                             jobs=config.jobs)
    elif config.optimiser == "annealing":
        annealing = config.annealing or AnnealingConfig(
            seed=config.seed, min_temp_iterations=DEFAULT_CLI_SA_ITERATIONS)
        result = simulated_annealing(graph, platform, config.objective,
                                     config.batch_size, annealing)
    else:
        result = rule_based(graph, platform, config.objective, config.batch_size)
    report = _build_report(config, result.best_point, platform, backend,
                           result, space)
    return report, result


def run(config: RunConfig) -> int:
    """Run one optimisation and write report.json, design.json and
    trajectory.csv into the output directory; returns the exit code."""
    try:
        report, result = _optimise(config)
    except (ParseError, PlatformError, UnsupportedLayerError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_PARSE_ERROR
    except InfeasibleInitialError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INFEASIBLE_INITIAL
    except NoFeasibleDesignError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NO_FEASIBLE_DESIGN
    except SpaceTooLargeError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_SPACE_TOO_LARGE
    _write_outputs(config, report, result)
    click.echo(f"objective {report['objective_value']:.6g} with "
               f"{len(report['partitions'])} partition(s); "
               f"outputs in {config.output_dir}")
    return EXIT_OK


def sweep_batch(config: RunConfig, batch_list: list[int]) -> tuple[int, list[dict]]:
    """One optimisation per batch size; returns (exit code, result rows)."""
    rows = []
    for batch in batch_list:
        batch_config = _replace_batch(config, batch)
        try:
            report, _ = _optimise(batch_config)
        except (ParseError, PlatformError, UnsupportedLayerError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            return EXIT_PARSE_ERROR, rows
        except InfeasibleInitialError as exc:
            click.echo(f"error: {exc}", err=True)
            return EXIT_INFEASIBLE_INITIAL, rows
        except NoFeasibleDesignError as exc:
            click.echo(f"error: {exc}", err=True)
            return EXIT_NO_FEASIBLE_DESIGN, rows
        except SpaceTooLargeError as exc:
            click.echo(f"error: {exc}", err=True)
            return EXIT_SPACE_TOO_LARGE, rows
        rows.append({
            "batch": batch,
            "throughput_imgs_per_s": report["throughput_imgs_per_s"],
            "latency_s": report["latency_s"],
            "partition_count": len(report["partitions"]),
        })
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "throughput_imgs_per_s", "latency_s",
                         "partition_count"])
        for row in rows:
            writer.writerow([row["batch"], row["throughput_imgs_per_s"],
                             row["latency_s"], row["partition_count"]])
    click.echo(f"swept {len(rows)} batch sizes; results in {out / 'sweep.csv'}")
    return EXIT_OK, rows


def _replace_batch(config: RunConfig, batch: int) -> RunConfig:
    return RunConfig(
        model_path=config.model_path, platform_path=config.platform_path,
        output_dir=config.output_dir, backend=config.backend,
        optimiser=config.optimiser, objective=config.objective,
        batch_size=batch, seed=config.seed, annealing=config.annealing,
        report_formats=config.report_formats,
        brute_force_cap=config.brute_force_cap, jobs=config.jobs)


def _common_options(fn):
    options = [
        click.option("--model", "model_path", required=True,
                     help="Network description file (JSON)."),
        click.option("--platform", "platform_path", required=True,
                     help="Platform file, or the name of a bundled fixture "
                          "(zedboard, zc706, u250)."),
        click.option("--backend", default="fpgaconvnet-like", show_default=True,
                     type=click.Choice(sorted(BACKENDS))),
        click.option("--optimiser", default="rule", show_default=True,
                     type=click.Choice(["brute", "annealing", "rule"])),
        click.option("--batch-size", default=256, show_default=True,
                     type=click.IntRange(min=1)),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--out", "output_dir", default="out", show_default=True,
                     help="Output directory for reports and designs."),
        click.option("--report-formats", default="json", show_default=True,
                     help="Comma-separated subset of json,csv."),
        click.option("--jobs", default=1, show_default=True,
                     type=click.IntRange(min=1),
                     help="Worker processes for brute-force sharding."),
        click.option("--cap", "brute_force_cap", default=10_000_000,
                     show_default=True,
                     help="Refuse brute force above this many design points."),
        click.option("--k-start", default=1000.0, show_default=True,
                     help="Annealing start temperature."),
        click.option("--k-min", default=1.0, show_default=True,
                     help="Annealing minimum temperature."),
        click.option("--cooling-rate", default=0.98, show_default=True,
                     help="Annealing temperature decay per iteration."),
        click.option("--sa-iterations", default=DEFAULT_CLI_SA_ITERATIONS,
                     show_default=True,
                     help="Deterministic iteration count at minimum temperature."),
        click.option("--time-budget", default=None, type=float,
                     help="Wall-clock budget (seconds) at minimum temperature; "
                          "overrides --sa-iterations and is not reproducible."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _config_from_flags(objective: str, **kw) -> RunConfig:
    if kw["time_budget"] is not None:
        annealing = AnnealingConfig(
            k_start=kw["k_start"], k_min=kw["k_min"],
            cooling_rate=kw["cooling_rate"], seed=kw["seed"],
            time_budget_s=kw["time_budget"])
    else:
        annealing = AnnealingConfig(
            k_start=kw["k_start"], k_min=kw["k_min"],
            cooling_rate=kw["cooling_rate"], seed=kw["seed"],
            min_temp_iterations=kw["sa_iterations"])
    return RunConfig(
        model_path=kw["model_path"], platform_path=kw["platform_path"],
        output_dir=kw["output_dir"], backend=kw["backend"],
        optimiser=kw["optimiser"], objective=objective,
        batch_size=kw["batch_size"], seed=kw["seed"], annealing=annealing,
        report_formats=frozenset(f for f in kw["report_formats"].split(",") if f),
        brute_force_cap=kw["brute_force_cap"], jobs=kw["jobs"])


@click.group()
@click.version_option(__version__)
def main():
    """Map sequential CNN models onto streaming FPGA architectures."""


@main.command(name="optimise")
@_common_options
@click.option("--objective", default="latency", show_default=True,
              type=click.Choice(["latency", "throughput"]))
def optimise_command(objective: str, **kw):
    """Optimise folding factors and reconfiguration cuts for one model."""
    try:
        config = _config_from_flags(objective, **kw)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARSE_ERROR)
    sys.exit(run(config))


@main.command(name="sweep-batch")
@_common_options
@click.option("--batches", default="1,16,256,4096", show_default=True,
              help="Comma-separated batch sizes to optimise for.")
def sweep_batch_command(batches: str, **kw):
    """Optimise for throughput across a list of batch sizes."""
    try:
        batch_list = [int(b) for b in batches.split(",") if b]
        if not batch_list or min(batch_list) < 1:
            raise ValueError(f"batch sizes must be positive, got '{batches}'")
        config = _config_from_flags("throughput", **kw)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARSE_ERROR)
    code, _ = sweep_batch(config, batch_list)
    sys.exit(code)


def reload_design_objective(design_doc: dict, platform: Platform,
                            objective: str = "latency", batch: int = 1) -> float:
    """Objective of an exported design recomputed from its document alone."""
    return design_objective(design_doc, platform.reconfig_time_s, objective, batch)


if __name__ == "__main__":
    main()
