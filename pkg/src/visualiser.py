"""
Visualisation module for displaying benchmark results.
"""

import io
from typing import Dict, Mapping, Optional, Sequence, Set

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table
from rich.tree import Tree

from .evaluation import format_mean_std, improvement
from .models import AugmentationScheme, BenchmarkReport, ResultRow, TrainingTrace

console = Console()

_CATEGORY_STYLES = {
    "baseline": "white",
    "geometric": "cyan",
    "photometric": "magenta",
}


def _scheme(name: str) -> Optional[AugmentationScheme]:
    try:
        return AugmentationScheme(name)
    except ValueError:
        return None


def _display_name(name: str) -> str:
    scheme = _scheme(name)
    return scheme.display_name if scheme else name


def _category(name: str) -> str:
    scheme = _scheme(name)
    return scheme.category if scheme else "other"


def _table_order(report: BenchmarkReport) -> int:
    scheme = _scheme(report.scheme)
    return list(AugmentationScheme).index(scheme) if scheme else len(AugmentationScheme)


def _best_per_category(reports: Sequence[BenchmarkReport], metric: str) -> Set[str]:
    """Schemes holding the highest mean of ``metric`` within their category."""
    best: Dict[str, float] = {}
    for r in reports:
        category = _category(r.scheme)
        if category in ("geometric", "photometric"):
            best[category] = max(best.get(category, -1.0), getattr(r, metric))
    return {
        r.scheme
        for r in reports
        if _category(r.scheme) in best and getattr(r, metric) == best[_category(r.scheme)]
    }


def _signed(points: float) -> str:
    return f"{points:+.2f}"


class BenchmarkVisualiser:
    """Visualises dataset counts, training traces and benchmark reports."""

    def __init__(self, target: Optional[Console] = None):
        self.console = target or console

    def display_counts(self, counts: Mapping[str, int], title: str = "Images per class"):
        """Display per-class image counts."""
        table = Table(title=title)
        table.add_column("Class", style="bold")
        table.add_column("Images", justify="right")
        for name, count in counts.items():
            table.add_row(name, str(count))
        table.add_section()
        table.add_row("Total", str(sum(counts.values())))
        self.console.print(table)

    def display_trace(self, trace: TrainingTrace):
        """Display the per-epoch loss and training accuracy."""
        table = Table(title="Training")
        table.add_column("Epoch", justify="right")
        table.add_column("Loss", justify="right")
        table.add_column("Train Top-1", justify="right")
        for stats in trace.epochs:
            table.add_row(
                str(stats.epoch), f"{stats.loss:.4f}", f"{stats.train_top1 * 100:.2f}%"
            )
        self.console.print(table)

    def display_fold(self, row: ResultRow):
        """One line per finished fold, or the failure of a scheme."""
        if row.status != "ok":
            self.console.print(
                f"[red]✗ {_display_name(row.scheme)} failed:[/red] {row.error}"
            )
            return
        seconds = f" in {row.wall_seconds:.1f}s" if row.wall_seconds is not None else ""
        self.console.print(
            f"[green]✓[/green] {_display_name(row.scheme)} fold {row.fold}: "
            f"top-1 {row.top1 * 100:.2f}%, top-5 {row.top5 * 100:.2f}% "
            f"({row.items} images){seconds}"
        )

    def display_folds(self, report: BenchmarkReport):
        """Display the per-fold scores behind one report row."""
        tree = Tree(f"📊 {_display_name(report.scheme)}")
        for fold in report.folds:
            tree.add(
                f"Fold {fold.fold_index}: top-1 {fold.top1 * 100:.2f}%, "
                f"top-5 {fold.top5 * 100:.2f}% ({fold.item_count} images)"
            )
        self.console.print(tree)

    def build_report_table(
        self,
        reports: Sequence[BenchmarkReport],
        failures: Optional[Mapping[str, str]] = None,
    ) -> Table:
        """
        Table of mean ± std per scheme, with the change versus the baseline.

        The best Top-1 and Top-5 within the geometric and the photometric
        category are bold and marked with ``*``.
        """
        ordered = sorted(reports, key=_table_order)
        baseline = next((r for r in ordered if r.scheme == AugmentationScheme.NONE.value), None)
        best_top1 = _best_per_category(ordered, "top1_mean")
        best_top5 = _best_per_category(ordered, "top5_mean")

        table = Table(title="Augmentation benchmark")
        table.add_column("Scheme", style="bold")
        table.add_column("Category")
        table.add_column("Top-1", justify="right")
        table.add_column("Top-5", justify="right")
        table.add_column("Δ Top-1", justify="right")
        table.add_column("Δ Top-5", justify="right")
        table.add_column("Folds", justify="right")

        for r in ordered:
            category = _category(r.scheme)
            style = _CATEGORY_STYLES.get(category, "white")
            top1 = format_mean_std(r.top1_mean, r.top1_std)
            top5 = format_mean_std(r.top5_mean, r.top5_std)
            if r.scheme in best_top1:
                top1 = f"[bold]{top1} *[/bold]"
            if r.scheme in best_top5:
                top5 = f"[bold]{top5} *[/bold]"
            delta = improvement(r, baseline)
            table.add_row(
                _display_name(r.scheme),
                f"[{style}]{category}[/{style}]",
                top1,
                top5,
                _signed(delta[0]) if delta else "-",
                _signed(delta[1]) if delta else "-",
                str(len(r.folds)),
            )

        for scheme in failures or {}:
            table.add_row(
                _display_name(scheme),
                _category(scheme),
                "[red]failed[/red]",
                "[red]failed[/red]",
                "-",
                "-",
                "0",
            )
        return table

    def display_report(
        self,
        reports: Sequence[BenchmarkReport],
        failures: Optional[Mapping[str, str]] = None,
    ):
        """Display the benchmark table followed by any scheme errors."""
        self.console.print(self.build_report_table(reports, failures))
        for scheme, error in (failures or {}).items():
            self.display_error(f"{_display_name(scheme)}: {error}")

    def render_report_text(
        self,
        reports: Sequence[BenchmarkReport],
        failures: Optional[Mapping[str, str]] = None,
        width: int = 110,
    ) -> str:
        """The benchmark table as plain text."""
        recorder = Console(record=True, width=width, file=io.StringIO())
        recorder.print(self.build_report_table(reports, failures))
        return recorder.export_text()

    def progress(self) -> Progress:
        """Spinner for long-running stages; use as a context manager."""
        return Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=self.console,
            transient=True,
        )

    def display_error(self, error: str):
        """Display error messages."""
        panel = Panel(f"❌ {error}", title="Error", border_style="red")
        self.console.print(panel)

    def display_notice(self, message: str):
        panel = Panel(message, border_style="yellow")
        self.console.print(panel)
