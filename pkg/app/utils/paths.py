"""Utility functions for constructing output file paths."""

from pathlib import Path

__all__ = [
    "resolved_config_path",
    "pretrain_history_path",
    "predictions_path",
    "benchmark_csv_path",
    "benchmark_json_path",
    "benchmark_plot_path",
]


def resolved_config_path(out_dir) -> Path:
    """Path of the fully resolved config echoed by every command.

    Args:
        out_dir: Command output directory

    Returns:
        Path to resolved_config.json
    """
    return Path(out_dir) / "resolved_config.json"


def pretrain_history_path(out_dir) -> Path:
    """Path of the (step, loss) samples recorded during backbone pretraining."""
    return Path(out_dir) / "pretrain_history.csv"


def predictions_path(out_dir) -> Path:
    """Path of the per-query JSON-lines classifier report."""
    return Path(out_dir) / "predictions.jsonl"


def benchmark_csv_path(out_dir) -> Path:
    return Path(out_dir) / "benchmark.csv"


def benchmark_json_path(out_dir) -> Path:
    return Path(out_dir) / "benchmark.json"


def benchmark_plot_path(out_dir) -> Path:
    """Path of the accuracy-vs-shots SVG line plot.

    Args:
        out_dir: Command output directory

    Returns:
        Path to accuracy_vs_shots.svg
    """
    return Path(out_dir) / "accuracy_vs_shots.svg"
