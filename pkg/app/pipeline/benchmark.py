"""Shot sweep over every configured method: CSV, JSON and an SVG plot."""

import json
import logging
from pathlib import Path

import pandas as pd

from app.config import RunConfig, echo_config
from app.pipeline.context import load_backbone, load_dataset, template_for
from app.utils.errors import StorageError
from app.utils.paths import benchmark_csv_path, benchmark_json_path, benchmark_plot_path
from app.utils.svg_plot import accuracy_vs_shots_svg, write_svg
from ml.evaluation.benchmark import BenchmarkContext, BenchmarkReport, run_benchmark

LOGGER = logging.getLogger(__name__)


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path


def _plot_series(reports: list[BenchmarkReport]) -> dict[str, list[tuple[int, float]]]:
    series = {}
    for report in reports:
        summary = report.summary()
        for n_way, group in summary.groupby("n_way", sort=True):
            label = report.method if summary["n_way"].nunique() == 1 else f"{report.method} ({n_way}-way)"
            series[label] = [(int(s), float(m)) for s, m in zip(group["shots"], group["mean"])]
    return series


def main(cfg: RunConfig) -> dict[str, Path]:
    harness = cfg.harness
    schedule = cfg.schedule.build()
    dataset = load_dataset(cfg)
    model = load_backbone(cfg, dataset, schedule)
    ctx = BenchmarkContext(
        dataset=dataset,
        model=model,
        schedule=schedule,
        gcpl=cfg.gcpl,
        comple=cfg.comple,
        classifier=cfg.classifier,
        template=template_for(cfg),
        n_way=harness.n_way,
        workers=harness.workers,
        record_wall_clock=harness.record_wall_clock,
        spec_name=harness.spec_name,
    )

    LOGGER.info(f"📊 Benchmark {harness.spec_name}: methods={harness.methods} shots={harness.shots} seeds={harness.seeds}")
    reports = [run_benchmark(method, harness.shots, harness.seeds, ctx) for method in harness.methods]

    out_dir = Path(cfg.paths.output_dir)
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    csv_path = benchmark_csv_path(out_dir)
    _write_text(csv_path, frame.to_csv(index=False))
    payload = {"spec_name": harness.spec_name, "reports": [r.to_dict() for r in reports]}
    json_path = _write_text(benchmark_json_path(out_dir), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    svg_path = write_svg(accuracy_vs_shots_svg(_plot_series(reports), title=f"{harness.spec_name}: accuracy vs shots"),
                         benchmark_plot_path(out_dir))
    echo_config(cfg, out_dir)

    for report in reports:
        for row in report.summary().itertuples(index=False):
            LOGGER.info(f"  {row.method:<9} {row.n_way}-way {row.shots:2d}-shot  {row.mean:.4f} ± {row.std:.4f}")
    LOGGER.info(f"✅ Wrote {csv_path}, {json_path}, {svg_path}")
    return {"csv": csv_path, "json": json_path, "svg": svg_path}
