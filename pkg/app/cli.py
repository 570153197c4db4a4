"""Command line: python -m app.cli [--config PATH] [--seed N] [-v] COMMAND ...

Exit codes: 0 success, 1 other failure, 2 config error, 3 numerical
divergence, 4 I/O error.
"""

import logging

import click

from app import env
from app.config import RunConfig, load_config
from app.pipeline import benchmark as benchmark_pipeline
from app.pipeline import classify as classify_pipeline
from app.pipeline import inspect_file as inspect_pipeline
from app.pipeline import pretrain as pretrain_pipeline
from app.pipeline import train as train_pipeline
from app.utils.errors import GCPLError
from app.utils.logging import setup_logging

LOGGER = logging.getLogger(__name__)


class _GCPLGroup(click.Group):
    """Maps project exceptions to their exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except GCPLError as exc:
            logging.getLogger("gcpl").error("❌ %s", exc)
            ctx.exit(exc.exit_code)


def _config(ctx: click.Context) -> RunConfig:
    obj = ctx.ensure_object(dict)
    if "config" not in obj:
        obj["config"] = load_config(obj.get("config_path"), seed=obj.get("seed"))
    return obj["config"]


@click.group(cls=_GCPLGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML run config (or an echoed resolved_config.json).")
@click.option("--seed", type=int, default=None, help="Global seed; overrides GCPL_SEED and the config.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, seed: int | None, verbose: bool) -> None:
    setup_logging("DEBUG" if verbose else env.GCPL_LOG_LEVEL)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path or env.GCPL_CONFIG
    ctx.obj["seed"] = seed


@cli.command()
@click.pass_context
def pretrain(ctx: click.Context) -> None:
    """Pretrain and freeze the conditional denoiser."""
    pretrain_pipeline.main(_config(ctx))


@cli.command()
@click.option("--method", type=click.Choice(["gcpl", "comple"]), required=True)
@click.option("--aligned-with-comple", "aligned", is_flag=True,
              help="GCPL only: use the settings that reproduce a λ=0 CoMPLe run.")
@click.pass_context
def train(ctx: click.Context, method: str, aligned: bool) -> None:
    """Learn class prompts on the support episode and write the embedding store."""
    if aligned and method != "gcpl":
        raise click.BadParameter("--aligned-with-comple only applies to --method gcpl")
    train_pipeline.main(_config(ctx), method, aligned=aligned)


@cli.command()
@click.option("--queries", type=click.Path(exists=True), default=None,
              help="A .lat file or a folder of <label>/*.lat; defaults to the episode's held-out split.")
@click.pass_context
def classify(ctx: click.Context, queries: str | None) -> None:
    """Classify queries with the stored prompts and write predictions.jsonl."""
    classify_pipeline.main(_config(ctx), queries)


@cli.command()
@click.pass_context
def benchmark(ctx: click.Context) -> None:
    """Run the shot sweep for every configured method."""
    benchmark_pipeline.main(_config(ctx))


@cli.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def inspect(path: str) -> None:
    """Print the header and tensor summaries of any versioned file."""
    click.echo(inspect_pipeline.main(path))


if __name__ == "__main__":
    cli()
