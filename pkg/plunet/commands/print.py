from __future__ import annotations

from collections.abc import Sequence

from rich.table import Table
from rich.text import Text

from plunet.analysis import CostReport, Reduction
from plunet.engine import GradcheckResult
from plunet.metrics import AggregateReport
from plunet.utils.console import ERROR_STYLE, INFO_STYLE, SUCCESS_STYLE


def _millions(count: int) -> str:
    return f"{count / 1e6:.2f}M"


def _giga(count: int) -> str:
    return f"{count / 1e9:.2f}G"


def cost_table(report: CostReport, *, all_rows: bool = False) -> Table:
    """Parameterized layers only, unless `all_rows`."""
    dims = ",".join(map(str, report.input_dims))
    table = Table(title=f"input {dims}, FLOPs = {report.convention}", title_style=INFO_STYLE)
    table.add_column("layer")
    table.add_column("kind")
    table.add_column("params", justify="right")
    table.add_column("FLOPs", justify="right")

    for row in report.rows:
        if all_rows or row.params:
            table.add_row(row.name, str(row.kind), f"{row.params:,}", f"{row.flops:,}")

    table.add_section()
    table.add_row(
        Text("total", style=INFO_STYLE),
        "",
        f"{report.total_params:,} ({_millions(report.total_params)})",
        f"{report.total_flops:,} ({_giga(report.total_flops)})",
    )
    return table


def metrics_table(report: AggregateReport, title: str = "metrics") -> Table:
    table = Table(title=f"{title} ({report.mode}, {report.n_images} images)", title_style=INFO_STYLE)
    for name in ("PC", "SE", "F1", "JS"):
        table.add_column(name, justify="right")

    scores = report.scores
    table.add_row(*(f"{value:.4f}" for value in (scores.pc, scores.se, scores.f1, scores.js)))
    return table


def gradcheck_table(results: Sequence[GradcheckResult]) -> Table:
    table = Table(title="gradient check", title_style=INFO_STYLE)
    table.add_column("target")
    table.add_column("checked", justify="right")
    table.add_column("max rel. error", justify="right")
    table.add_column("status")

    for result in results:
        status = Text("pass", style=SUCCESS_STYLE) if result.passed else Text("FAIL", style=ERROR_STYLE)
        table.add_row(result.target, str(result.checked), f"{result.max_rel_error:.2e}", status)

    return table


def reduction_table(reduction: Reduction) -> Table:
    table = Table(
        title=f"PS module vs ASPP, {reduction.in_channels} -> {reduction.out_channels}, SE excluded",
        title_style=INFO_STYLE,
    )
    table.add_column("")
    table.add_column("ASPP", justify="right")
    table.add_column("PS", justify="right")
    table.add_column("reduction", justify="right")

    table.add_row(
        "branch kernels",
        f"{reduction.aspp_branch_weights:,}",
        f"{reduction.ps_branch_weights:,}",
        f"{reduction.branch_ratio:.3f}x",
    )
    table.add_row(
        "whole module",
        f"{reduction.aspp_params:,}",
        f"{reduction.ps_params:,}",
        f"{reduction.module_ratio:.3f}x",
    )
    return table
