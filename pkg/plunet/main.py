# pyright: reportDeprecated=false

from importlib import metadata
from pathlib import Path
from typing import Annotated, Any, Optional, final, override

import click
import typer

import plunet.errors as err
from plunet.analysis import compare_ps_vs_aspp
from plunet.commands.compare import reduction_json
from plunet.commands.describe import describe as describe_arch
from plunet.commands.evaluate import evaluate_checkpoint
from plunet.commands.gradcheck import SCOPES, run_gradcheck
from plunet.commands.predict import mask_foreground, predict_image
from plunet.commands.print import cost_table, gradcheck_table, metrics_table, reduction_table
from plunet.commands.synth import synth_dataset
from plunet.commands.train import load_train_config, run_training
from plunet.engine import Dims
from plunet.metrics import DEFAULT_THRESHOLD
from plunet.names import Aggregation, FlopConvention, Variant
from plunet.train import DataSource, load_checkpoint
from plunet.utils.console import SUCCESS_STYLE, console, console_err

app = typer.Typer(
    help="Differentiable CNN engine, cost analysis and training harness for U-Net style segmentation models.",
    context_settings=dict(help_option_names=["--help", "-h"]),
    rich_markup_mode="rich",
    pretty_exceptions_enable=False,
    no_args_is_help=True,
)

type Size = tuple[int, int]


@final
class _parse_Dims(click.ParamType):
    """Comma separated positive integers, e.g. '1,3,96,96'."""

    def __init__(self, length: int) -> None:
        self.length: int = length
        self.name: str = ",".join("N" * length) if length != 4 else "N,C,H,W"

    @override
    def convert(self, value: Any, param: Any, ctx: click.Context | None) -> Any:
        if isinstance(value, tuple):
            return value

        with err.raise_typer():
            try:
                dims = tuple(int(part) for part in str(value).split(","))

            except ValueError:
                raise err.option_invalid_dims(value, self.length)

            if len(dims) != self.length or any(d <= 0 for d in dims):
                raise err.option_invalid_dims(value, self.length)

        return dims


def _threshold(value: float) -> float:
    if not 0.0 < value < 1.0:
        with err.raise_typer():
            err.assert_option(err.Raise("--threshold", value, expected="in range (0, 1)"))

    return value


@app.command()
def describe(
    arch: Annotated[Variant, typer.Option("--arch", "-a", help="Architecture preset")] = Variant.plunet,
    config: Annotated[
        Optional[Path],
        typer.Option(exists=True, dir_okay=False, help="Architecture JSON config, overrides --arch"),
    ] = None,
    input_dims: Annotated[
        Dims,
        typer.Option("--input", "-i", click_type=_parse_Dims(4), help="Input dims as N,C,H,W"),
    ] = (1, 3, 96, 96),
    convention: Annotated[FlopConvention, typer.Option(help="FLOP counting convention")] = FlopConvention.TWO_MACS,
    all_rows: Annotated[bool, typer.Option("--all-rows", help="Also list layers without parameters")] = False,
    json: Annotated[bool, typer.Option("--json", help="Emit the report as JSON")] = False,
) -> None:
    r""":bar_chart: [blue]Describe[/blue] an architecture: per-layer parameters and FLOPs."""
    with err.raise_typer():
        report = describe_arch(arch, config, input_dims, convention)

    if json:
        typer.echo(report.to_json())
    else:
        console.print(cost_table(report, all_rows=all_rows))


@app.command()
def train(
    config: Annotated[
        Optional[Path], typer.Option("--config", "-c", exists=True, dir_okay=False, help="Training TOML file")
    ] = None,
    arch: Annotated[Optional[Variant], typer.Option("--arch", "-a", help="Architecture preset")] = None,
    width_scale: Annotated[
        Optional[int], typer.Option(min=1, help="Divide every width by this power of two")
    ] = None,
    epochs: Annotated[Optional[int], typer.Option(min=1)] = None,
    batch_size: Annotated[Optional[int], typer.Option(min=1)] = None,
    seed: Annotated[Optional[int], typer.Option(min=0)] = None,
    threshold: Annotated[Optional[float], typer.Option()] = None,
    data: Annotated[
        Optional[Path], typer.Option(exists=True, file_okay=False, help="Dataset directory of PPM/PGM pairs")
    ] = None,
    out: Annotated[Optional[Path], typer.Option("--out", "-o", file_okay=False, help="Run directory")] = None,
    resume: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Continue from a checkpoint")
    ] = None,
    quiet: Annotated[bool, typer.Option("--quiet", "-q", help="No progress bar or epoch summaries")] = False,
) -> None:
    r""":rocket: [blue]Train[/blue] a model, then score its best checkpoint on the test split."""
    with err.raise_typer():
        train_config = load_train_config(
            config,
            arch=arch,
            width_scale=width_scale,
            epochs=epochs,
            batch_size=batch_size,
            seed=seed,
            threshold=None if threshold is None else _threshold(threshold),
            data=None if data is None else DataSource(path=data),
            out=out,
        )
        outcome = run_training(train_config, resume_from=resume, verbose=not quiet)

    console_err.print(f"checkpoints written to '{train_config.out}'", style=SUCCESS_STYLE)
    if outcome.test is not None:
        console.print(metrics_table(outcome.test, "test split"))


@app.command(name="eval")
def eval_(
    ckpt: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Checkpoint file")],
    data: Annotated[Path, typer.Option(exists=True, file_okay=False, help="Dataset directory of PPM/PGM pairs")],
    threshold: Annotated[float, typer.Option(callback=_threshold)] = DEFAULT_THRESHOLD,
    aggregation: Annotated[Aggregation, typer.Option(help="Metric aggregation")] = Aggregation.per_image,
    lenient_masks: Annotated[
        bool, typer.Option("--lenient-masks", help="Accept any grey level, >= 128 is foreground")
    ] = False,
    json: Annotated[bool, typer.Option("--json", help="Emit the report as JSON")] = False,
) -> None:
    r""":straight_ruler: [blue]Evaluate[/blue] a checkpoint on a dataset directory."""
    with err.raise_typer():
        report = evaluate_checkpoint(ckpt, data, threshold, aggregation, strict=not lenient_masks)

    if json:
        typer.echo(report.to_json())
    else:
        console.print(metrics_table(report, str(ckpt)))


@app.command()
def predict(
    ckpt: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Checkpoint file")],
    image: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="PPM or PGM image")],
    out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False, help="Output PGM mask")],
    threshold: Annotated[float, typer.Option(callback=_threshold)] = DEFAULT_THRESHOLD,
) -> None:
    r""":art: [blue]Predict[/blue] the binary mask of one image."""
    with err.raise_typer():
        mask = predict_image(load_checkpoint(ckpt), image, out, threshold)

    console_err.print(f"mask written to '{out}' ({mask_foreground(mask):.1%} foreground)", style=SUCCESS_STYLE)


@app.command()
def gradcheck(
    scope: Annotated[str, typer.Argument(help=f"One of [{'|'.join(SCOPES)}]")] = "all",
    check_all: Annotated[bool, typer.Option("--all", help="Check every primitive and block")] = False,
    seed: Annotated[int, typer.Option(min=0)] = 0,
) -> None:
    r""":white_check_mark: [blue]Check[/blue] analytic gradients against central finite differences."""
    with err.raise_typer():
        results = run_gradcheck("all" if check_all else scope, seed)

    console.print(gradcheck_table(results))
    if not all(result.passed for result in results):
        raise typer.Exit(code=err.GRADCHECK_FAILED)


@app.command()
def synth(
    out: Annotated[Path, typer.Option("--out", "-o", file_okay=False, help="Destination directory")],
    count: Annotated[int, typer.Option(min=1)] = 200,
    size: Annotated[
        Size, typer.Option(click_type=_parse_Dims(2), help="Image size as H,W")
    ] = (64, 64),
    seed: Annotated[int, typer.Option(min=0)] = 0,
) -> None:
    r""":sparkles: [blue]Generate[/blue] a synthetic PPM/PGM segmentation dataset."""
    with err.raise_typer():
        written = synth_dataset(out, count, size, seed)

    console_err.print(f"{len(written)} files written to '{out}'", style=SUCCESS_STYLE)


@app.command()
def compare(
    input_channels: Annotated[int, typer.Option(min=1)] = 256,
    output_channels: Annotated[int, typer.Option(min=1)] = 512,
    json: Annotated[bool, typer.Option("--json", help="Emit the comparison as JSON")] = False,
) -> None:
    r""":scales: [blue]Compare[/blue] the parameters of the PS module and an ordinary ASPP."""
    with err.raise_typer():
        reduction = compare_ps_vs_aspp(input_channels, output_channels)

    if json:
        typer.echo(reduction_json(reduction))
    else:
        console.print(reduction_table(reduction))


def _print_version(value: bool) -> None:
    if value:
        typer.echo(f"plunet version {metadata.version('plunet')}")
        raise typer.Exit()


@app.callback()
def main_callback(
    version: Annotated[
        bool, typer.Option("--version", callback=_print_version, is_eager=True, help="Show the version and exit")
    ] = False,
) -> None:
    del version


def main() -> None:
    app()
