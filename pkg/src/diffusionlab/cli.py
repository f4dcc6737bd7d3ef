"""Command-line interface.

Commands: task-gen, decode, entropy, sweep, metrics, report.  Every config
key has exactly one flag (named after the key), so `--help` enumerates the
whole configuration surface.  Exit status: 0 success, 2 configuration
error, 3 runtime error (e.g. contradictory observations), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .chains import ChainError, Embedder, StepChain, metric_batch_rows
from .config import (
    CONFIG_SCHEMA,
    OUTPUT_DIR_ENV,
    ConfigError,
    ExperimentConfig,
    apply_override,
    default_config,
    load_config,
)
from .decoding import DecodeConfigError, diffusion_decode
from .entropy import (
    ANALYSIS_CSV_HEADER,
    DistributionError,
    mean_skip_entropy,
    profile_csv_rows,
    sensitivity_profile,
)
from .manifest import RunManifest, sha256_hex
from .posterior import ContradictionError, MaskedSequence
from .scaling import (
    ReportFlags,
    ScalingReport,
    SweepError,
    build_prompts,
    derive_seed,
    perturb_model,
    sweep_diffusion,
    sweep_parallel,
    sweep_sequential,
)
from .tasks import TaskError, TaskSpec, build_task, read_model, write_model

COMMANDS = ("task-gen", "decode", "entropy", "sweep", "metrics", "report")

RUNTIME_ERRORS = (
    ContradictionError,
    DecodeConfigError,
    TaskError,
    SweepError,
    ChainError,
    DistributionError,
)


def _flag_for(section: str, key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="path to a config file")
    for section, keys in CONFIG_SCHEMA.items():
        group = parser.add_argument_group(f"[{section}] keys")
        for key, (_, default) in keys.items():
            if section == "sweep" and key == "pair":
                group.add_argument(
                    "--pair",
                    nargs=2,
                    metavar=("KIND", "KIND"),
                    dest="sweep.pair",
                    default=argparse.SUPPRESS,
                    help=f"config sweep.pair (default {','.join(default)})",
                )
                continue
            names = [_flag_for(section, key)]
            if section == "sweep" and key == "k_max":
                names.insert(0, "--k")
            group.add_argument(
                *names,
                dest=f"{section}.{key}",
                default=argparse.SUPPRESS,
                metavar="VALUE",
                help=f"config {section}.{key} (default {default!r})",
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffusionlab",
        description="Masked-diffusion decoding laboratory over exact Markov task models.",
    )
    parser.add_argument("--version", action="version", version=f"diffusionlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, descr in (
        ("task-gen", "build a task model and write it to disk"),
        ("decode", "run one diffusion decode and dump its trace"),
        ("entropy", "skip-entropy curves and sensitivity profiles for a task pair"),
        ("sweep", "run a scaling sweep along one axis"),
        ("metrics", "score token chains against a source/reference"),
        ("report", "re-render CSV and figures from a stored report"),
    ):
        sp = sub.add_parser(name, help=descr, description=descr)
        _add_config_flags(sp)
        if name == "metrics":
            sp.add_argument("--chains", nargs="+", default=[], help="chain files, one step per line")
            sp.add_argument("--source", type=str, default=None, help="source chain file")
            sp.add_argument("--reference", type=str, default=None, help="reference chain file")
            sp.add_argument("--model", type=str, default=None, help="model matrix file for perplexity")
        if name == "report":
            sp.add_argument("--report", type=str, required=True, help="stored report JSON")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else default_config()
    for dest, value in vars(args).items():
        if "." not in dest:
            continue
        section, key = dest.split(".", 1)
        if section == "sweep" and key == "pair" and isinstance(value, list):
            config.values["sweep"]["pair"] = [str(v) for v in value]
            continue
        apply_override(config, section, key, str(value))
    return config


def _output_dir(config: ExperimentConfig) -> Path:
    configured = config.get("output", "directory")
    if not configured:
        configured = os.environ.get(OUTPUT_DIR_ENV, "out")
    path = Path(configured)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


class _ManifestWriter:
    def __init__(self, config: ExperimentConfig, out_dir: Path):
        self.out_dir = out_dir
        self.started = time.monotonic()
        self.manifest = RunManifest(
            config_hash=sha256_hex(config.canonical_text().encode("utf-8")),
            tool_version=__version__,
            master_seed=config.get("run", "master_seed"),
        )

    def record(self, path: Path) -> Path:
        self.manifest.add_file(path)
        return path

    def finish(self) -> Path:
        self.manifest.duration_seconds = time.monotonic() - self.started
        path = self.out_dir / "manifest.json"
        self.manifest.write(path)
        return path


def _want_plots(config: ExperimentConfig) -> bool:
    return bool(config.get("output", "plots"))


def cmd_task_gen(config: ExperimentConfig, args) -> int:
    spec = config.task_spec()
    model = build_task(spec)
    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    spec_path = out / "task_spec.txt"
    _write_text(spec_path, spec.to_text())
    writer.record(spec_path)
    model_path = out / "model.txt"
    write_model(model, model_path)
    writer.record(model_path)
    writer.finish()
    print(f"wrote {spec_path} and {model_path}")
    return 0


def cmd_decode(config: ExperimentConfig, args) -> int:
    spec = config.task_spec()
    model = build_task(spec)
    decode_cfg = config.decode_config()
    prompt_text = config.get("decode", "prompt")
    if prompt_text:
        prompt = MaskedSequence.from_text(prompt_text)
    else:
        master = config.get("run", "master_seed")
        prompt = build_prompts(model, 1, config.get("sweep", "observe"), master)[0].sequence
    trace = diffusion_decode(model, prompt, decode_cfg)
    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    jsonl_path = out / "trace.jsonl"
    _write_text(jsonl_path, trace.to_jsonl())
    writer.record(jsonl_path)
    csv_path = out / "trace_summary.csv"
    _write_csv(csv_path, trace.to_csv_rows())
    writer.record(csv_path)
    final_path = out / "decoded.txt"
    _write_text(final_path, MaskedSequence(trace.final_sequence).to_text() + "\n")
    writer.record(final_path)
    if _want_plots(config):
        from . import plots

        svg_path = out / "decode_overlap.svg"
        plots.plot_overlap_history(trace, svg_path)
        writer.record(svg_path)
    writer.finish()
    print(
        f"decoded {prompt.mask_set.size} masked positions in "
        f"{trace.steps_executed} steps -> {jsonl_path}"
    )
    return 0


def cmd_entropy(config: ExperimentConfig, args) -> int:
    pair = config.get("sweep", "pair")
    if sorted(pair) != ["parallel", "serial"]:
        raise ConfigError(f"entropy pairing must cover serial and parallel, got {pair}")
    serial_spec = config.task_spec(kind="serial")
    parallel_spec = config.task_spec(kind="parallel")
    serial = build_task(serial_spec)
    parallel = build_task(parallel_spec)
    k_max = config.get("sweep", "k_max")
    if not 2 <= k_max <= serial_spec.length:
        raise ConfigError(f"sweep.k_max must lie in [2, {serial_spec.length}]")
    radius = config.get("sweep", "epsilon")
    ks = list(range(2, k_max + 1))
    serial_h = [mean_skip_entropy(serial, k, radius) for k in ks]
    parallel_h = [mean_skip_entropy(parallel, k, radius) for k in ks]

    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    rows = [ANALYSIS_CSV_HEADER]
    for k, sh, ph in zip(ks, serial_h, parallel_h):
        rows.append(("serial", serial_spec.m, serial_spec.a, repr(serial_spec.eta), k, radius, repr(sh)))
        rows.append(
            ("parallel", parallel_spec.m, parallel_spec.w, repr(parallel_spec.eta), k, radius, repr(ph))
        )
        rows.append(("gap", serial_spec.m, 0, repr(serial_spec.eta), k, radius, repr(sh - ph)))
    gaps_path = out / "entropy_gaps.csv"
    _write_csv(gaps_path, rows)
    writer.record(gaps_path)

    # Probe sensitivity from a bucket-center start so the ball stays in-bucket.
    s1 = (parallel_spec.w // 2) % serial_spec.m
    radii = list(range(1, max(2, min(parallel_spec.w, serial_spec.m // 2 - 1)) + 1))
    profiles = {
        "serial": sensitivity_profile(serial, s1, k_max, radii),
        "parallel": sensitivity_profile(parallel, s1, k_max, radii),
    }
    prof_rows = [ANALYSIS_CSV_HEADER]
    prof_rows += profile_csv_rows(profiles["serial"], "serial", serial_spec.m, serial_spec.a, serial_spec.eta)
    prof_rows += profile_csv_rows(
        profiles["parallel"], "parallel", parallel_spec.m, parallel_spec.w, parallel_spec.eta
    )
    prof_path = out / "sensitivity_profiles.csv"
    _write_csv(prof_path, prof_rows)
    writer.record(prof_path)

    if _want_plots(config):
        from . import plots

        gap_svg = out / "entropy_gaps.svg"
        plots.plot_entropy_gap(ks, serial_h, parallel_h, gap_svg)
        writer.record(gap_svg)
        prof_svg = out / "sensitivity_profiles.svg"
        plots.plot_sensitivity_profiles(profiles, prof_svg)
        writer.record(prof_svg)
    writer.finish()
    print(f"wrote {gaps_path} and {prof_path}")
    return 0


def _diffusion_chunk(payload):
    model, prompts, grid, template, answers, master, margin = payload
    report = sweep_diffusion(model, prompts, grid, template, answers, master, margin)
    return [
        (r.grid_value, r.prompt_id, r.correct, r.steps_executed, r.output_length, r.des_triggered)
        for r in report.records
    ]


def _run_diffusion_sweep(config: ExperimentConfig) -> ScalingReport:
    spec = config.task_spec()
    true_model = build_task(spec)
    decode_model = true_model
    perturb = config.get("sweep", "perturb")
    master = config.get("run", "master_seed")
    if perturb > 0.0:
        decode_model = perturb_model(true_model, perturb, derive_seed(master, "perturb"))
    prompts = build_prompts(
        true_model, config.get("sweep", "runs"), config.get("sweep", "observe"), master
    )
    template = config.decode_config()
    grid = config.get("sweep", "grid")
    margin = config.get("sweep", "over_diffusion_margin")
    workers = config.get("run", "workers")
    if workers <= 1 or len(prompts) < 2 * workers:
        return sweep_diffusion(
            decode_model, prompts, grid, template, spec.answer_positions, master, margin
        )
    # Prompt-chunked execution; the per-run seed rule makes any partition
    # reproduce the single-process numbers exactly.
    bounds = np.linspace(0, len(prompts), workers + 1).astype(int)
    payloads = [
        (decode_model, prompts[lo:hi], grid, template, spec.answer_positions, master, margin)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(_diffusion_chunk, payloads))
    rows = sorted(row for part in partials for row in part)
    by_grid = {g: [] for g in grid}
    for grid_value, prompt_id, correct, steps, length, des in rows:
        by_grid[int(grid_value)].append((correct, steps, length))
    accuracy = [sum(c for c, _, _ in by_grid[g]) / len(by_grid[g]) for g in grid]
    flags = ReportFlags()
    peak = int(np.argmax(accuracy))
    flags.over_diffusion_detected = bool(
        peak < len(grid) - 1 and accuracy[-1] < accuracy[peak] - margin
    )
    return ScalingReport(
        axis="diffusion",
        grid=list(grid),
        accuracy=accuracy,
        correct_counts=[sum(c for c, _, _ in by_grid[g]) for g in grid],
        run_counts=[len(by_grid[g]) for g in grid],
        mean_steps=[float(np.mean([s for _, s, _ in by_grid[g]])) for g in grid],
        mean_output_length=[float(np.mean([n for _, _, n in by_grid[g]])) for g in grid],
        master_seed=master,
        flags=flags,
    )


def cmd_sweep(config: ExperimentConfig, args) -> int:
    axis = config.get("sweep", "axis")
    master = config.get("run", "master_seed")
    spec = config.task_spec()
    template = config.decode_config()
    if axis == "diffusion":
        report = _run_diffusion_sweep(config)
    elif axis == "parallel":
        model = build_task(spec)
        prompts = build_prompts(model, config.get("sweep", "prompts"), config.get("sweep", "observe"), master)
        report = sweep_parallel(
            model,
            prompts,
            config.get("sweep", "k_max"),
            config.get("sweep", "temperatures"),
            template,
            spec.answer_positions,
            master,
            config.get("sweep", "samples"),
        )
    elif axis == "sequential":
        grid = config.get("sweep", "grid")
        target = config.get("sweep", "target_step")
        if target < 0:
            target = spec.length - 1
        def family(length: int):
            return build_task(
                TaskSpec(
                    kind=spec.kind,
                    m=spec.m,
                    length=length,
                    a=spec.a,
                    b=spec.b,
                    w=spec.w,
                    eta=spec.eta,
                )
            )
        report = sweep_sequential(
            family,
            grid,
            template,
            target,
            master,
            config.get("sweep", "runs"),
            config.get("sweep", "plateau_delta"),
            config.get("sweep", "observe"),
        )
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")

    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    formats = config.get("output", "formats")
    name = f"{axis}_report"
    if "json" in formats:
        json_path = out / f"{name}.json"
        _write_text(json_path, report.to_json())
        writer.record(json_path)
    if "csv" in formats:
        csv_path = out / f"{name}.csv"
        _write_csv(csv_path, report.to_csv_rows())
        writer.record(csv_path)
    if _want_plots(config):
        from . import plots

        svg_path = out / f"{name}.svg"
        plots.plot_scaling_report(report, svg_path)
        writer.record(svg_path)
    writer.finish()
    summary = ", ".join(f"{g}:{a:.3f}" for g, a in zip(report.grid[:6], report.accuracy[:6]))
    print(f"{axis} sweep done ({summary}{'...' if len(report.grid) > 6 else ''})")
    return 0


def cmd_metrics(config: ExperimentConfig, args) -> int:
    if not args.chains:
        raise ConfigError("metrics needs at least one --chains file")
    chains = {}
    for path in args.chains:
        text = Path(path).read_text(encoding="utf-8")
        chains[Path(path).stem] = StepChain.from_text(text)
    source = StepChain.from_text(Path(args.source).read_text(encoding="utf-8")) if args.source else None
    reference = (
        StepChain.from_text(Path(args.reference).read_text(encoding="utf-8")) if args.reference else None
    )
    model = read_model(args.model) if args.model else None
    embedder = Embedder(seed=config.get("run", "master_seed"))
    rows = metric_batch_rows(chains, embedder, source=source, reference=reference, model=model)
    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    csv_path = out / "chain_metrics.csv"
    _write_csv(csv_path, rows)
    writer.record(csv_path)
    writer.finish()
    print(f"wrote {csv_path} ({len(rows) - 1} metric rows)")
    return 0


def cmd_report(config: ExperimentConfig, args) -> int:
    report_path = Path(args.report)
    report = ScalingReport.from_json(report_path.read_text(encoding="utf-8"))
    out = _output_dir(config)
    writer = _ManifestWriter(config, out)
    csv_path = out / f"{report.axis}_report.csv"
    _write_csv(csv_path, report.to_csv_rows())
    writer.record(csv_path)
    if _want_plots(config):
        from . import plots

        svg_path = out / f"{report.axis}_report.svg"
        plots.plot_scaling_report(report, svg_path)
        writer.record(svg_path)
    writer.finish()
    print(f"re-rendered {report_path} into {out}")
    return 0


HANDLERS = {
    "task-gen": cmd_task_gen,
    "decode": cmd_decode,
    "entropy": cmd_entropy,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        return HANDLERS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
