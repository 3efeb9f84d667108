"""
Result emitters: sweep tables (CSV), paired differences (CSV), solve dumps
(JSON via orjson) and static SVG plots.

CSV files are written to a temporary sibling and moved into place, so a
failed write never leaves a partial table behind.
"""

import csv
import io
import logging
import os
import tempfile
from dataclasses import astuple, fields
from pathlib import Path
from typing import Any, Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import orjson  # noqa: E402

from ..exceptions import OutputError  # noqa: E402
from ..services.follower import TraceRecord  # noqa: E402
from ..services.sweep import PairedRow, SweepResult, SweepRow  # noqa: E402

logger = logging.getLogger(__name__)

CSV_COLUMNS = [f.name for f in fields(SweepRow)]
PAIRED_COLUMNS = [f.name for f in fields(PairedRow)]

PLOT_METRICS = {
    "U": ("mean_U", "ci95_U", "BS utility U"),
    "V": ("mean_V", "ci95_V", "IRS utility V"),
    "sum_rate": ("mean_sum_rate", "ci95_sum_rate", "sum rate (bits/s/Hz)"),
}

AXIS_LABELS = {
    "p_max_dbm": "maximum transmit power (dBm)",
    "num_modules": "number of reflection modules S",
}


def format_cell(value: Any) -> str:
    """Floats with 9 significant digits; everything else as-is."""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _render_csv(columns: Sequence[str], rows: Sequence[Any]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(v) for v in astuple(row)])
    return buffer.getvalue()


def write_atomic(path: Path, content: str) -> Path:
    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            "w", encoding="utf-8", newline="", dir=path.parent,
            prefix=f".{path.name}.", suffix=".tmp", delete=False,
        ) as tmp:
            tmp_name = tmp.name
            tmp.write(content)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def write_results_csv(rows: Sequence[SweepRow], path: Path) -> Path:
    return write_atomic(path, _render_csv(CSV_COLUMNS, rows))


def write_paired_csv(rows: Sequence[PairedRow], path: Path) -> Path:
    return write_atomic(path, _render_csv(PAIRED_COLUMNS, rows))


def read_results_csv(path: Path) -> List[SweepRow]:
    """Parse a table written by write_results_csv."""
    converters = {f.name: f.type for f in fields(SweepRow)}
    casts = {"str": str, "int": int, "float": float, str: str, int: int, float: float}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise OutputError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            SweepRow(**{name: casts[converters[name]](raw) for name, raw in record.items()})
            for record in reader
        ]


def write_sweep_plots(rows: Sequence[SweepRow], out_dir: Path, sweep_name: str) -> List[Path]:
    """One SVG per metric: mean +/- CI against the sweep value, one series per scheme."""
    out_dir = Path(out_dir)
    written = []
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    for metric, (mean_key, ci_key, label) in PLOT_METRICS.items():
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for scheme in schemes:
            series = [r for r in rows if r.scheme == scheme]
            ax.errorbar(
                [r.sweep_value for r in series],
                [getattr(r, mean_key) for r in series],
                yerr=[getattr(r, ci_key) for r in series],
                marker="o", capsize=3, label=scheme,
            )
        ax.set_xlabel(AXIS_LABELS.get(sweep_name, sweep_name))
        ax.set_ylabel(label)
        ax.grid(True)
        if schemes:
            ax.legend()
        path = out_dir / f"{sweep_name}_{metric}.svg"
        try:
            fig.savefig(path, format="svg")
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e}") from e
        finally:
            plt.close(fig)
        written.append(path)
    return written


def write_trace_plot(trace: Sequence[TraceRecord], path: Path) -> Path:
    """Follower objective and ADMM residual against the inner iteration."""
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
    iterations = [r["iteration"] for r in trace]
    top.plot(iterations, [r["objective"] for r in trace], marker=".")
    top.set_ylabel("dual-transform objective")
    top.grid(True)
    bottom.semilogy(iterations, [max(r["residual"], 1e-300) for r in trace], marker=".")
    bottom.set_ylabel("||theta - phi|| (relative)")
    bottom.set_xlabel("inner iteration")
    bottom.grid(True)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def dump_json(document: Dict[str, Any]) -> bytes:
    return orjson.dumps(document, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)


def emit_outputs(result: SweepResult, out_dir: Path, plots: bool = False) -> Dict[str, Path]:
    """Write results.csv, paired.csv and (optionally) the metric plots into out_dir."""
    out_dir = Path(out_dir)
    written = {
        "results": write_results_csv(result.rows, out_dir / "results.csv"),
        "paired": write_paired_csv(result.paired, out_dir / "paired.csv"),
    }
    if plots:
        for path in write_sweep_plots(result.rows, out_dir, result.spec.name.value):
            written[path.stem] = path
    for name, path in written.items():
        logger.info("[OUTPUT] %s -> %s", name, path)
    return written
