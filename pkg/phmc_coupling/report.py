"""Write experiment outputs: CSV tables, JSON bundles, the run manifest, SVG line
charts and an optional one-page PDF summary.

Only *ReportLab* is required for the charts and the PDF.  Tables are written with a
fixed column order and floats as round-trip ``repr`` strings, so reruns with the same
manifest produce identical bytes; for the same reason no file name carries a
timestamp and the PDF is written in ReportLab's invariant mode.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np
import pandas as pd
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.legends import Legend
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle
from reportlab.lib.units import cm
from reportlab.pdfgen import canvas
from reportlab.platypus import Paragraph, Table, TableStyle

logger = logging.getLogger(__name__)

__all__ = [
    "SCHEMA_VERSION",
    "format_value",
    "write_table",
    "write_json",
    "write_manifest",
    "write_svg_chart",
    "export_pdf",
]

SCHEMA_VERSION = "1.0"

_SERIES_COLORS = [colors.black, colors.red, colors.blue, colors.green, colors.orange, colors.purple, colors.brown, colors.grey]
_MAX_EXACT_INT_BITS = 13_000


def format_value(value: Any) -> str:
    """Text form of one table cell (floats as round-trip ``repr``)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (int, np.integer)) and int(value).bit_length() > _MAX_EXACT_INT_BITS:
        # too long for int -> str; keep the magnitude
        return format(Decimal(int(value)), ".12E")
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


# --------------------------------------------------------------------------------------
# CSV / JSON
# --------------------------------------------------------------------------------------


def write_table(frame: pd.DataFrame, path: Path, columns: Sequence[str]) -> Path:
    """Write *frame* restricted to *columns* (in that order) as CSV.

    Raises:
        ValueError: If a column is missing.
    """
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValueError(f"{path.name}: missing columns {', '.join(missing)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(list(columns))
        for row in frame[list(columns)].itertuples(index=False, name=None):
            writer.writerow([format_value(v) for v in row])
    logger.debug("Wrote %d rows to %s", len(frame), path)
    return path


def write_json(data: Mapping[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(
    out_dir: Path,
    config: Mapping[str, Any],
    *,
    version: str,
    splitting_rule: str,
    outputs: Iterable[str],
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """``manifest.json``: effective configuration, versions, seed rule and output list."""
    manifest = {
        "library_version": version,
        "schema_version": SCHEMA_VERSION,
        "seed": config.get("seed"),
        "seed_splitting": splitting_rule,
        "config": dict(config),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    return write_json(manifest, out_dir / "manifest.json")


# --------------------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------------------


def write_svg_chart(
    plot_data: pd.DataFrame,
    path: Path,
    *,
    title: str = "",
    x_label: str = "x",
    y_label: str = "y",
    width: float = 480,
    height: float = 320,
) -> Path:
    """Line chart of long-format plot data (``x``, ``y``, ``series``), one line per series."""
    finite = plot_data[np.isfinite(plot_data["x"].astype(float)) & np.isfinite(plot_data["y"].astype(float))]
    names: List[str] = list(dict.fromkeys(finite["series"].astype(str)))
    drawing = Drawing(width, height)
    plot = LinePlot()
    plot.x, plot.y = 60, 50
    plot.width, plot.height = width - 180, height - 90
    plot.data = [
        list(zip(group["x"].astype(float), group["y"].astype(float)))
        for _, group in ((n, finite[finite["series"].astype(str) == n]) for n in names)
    ] or [[(0.0, 0.0)]]
    for i in range(len(plot.data)):
        plot.lines[i].strokeColor = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        plot.lines[i].strokeWidth = 1.2
    if len(finite):
        ys = finite["y"].astype(float)
        span = float(ys.max() - ys.min())
        plot.yValueAxis.valueMin = float(ys.min()) - 0.05 * span
        plot.yValueAxis.valueMax = float(ys.max()) + 0.05 * span if span > 0 else float(ys.max()) + 1.0
    drawing.add(plot)
    drawing.add(String(width / 2, height - 20, title, textAnchor="middle", fontSize=12))
    drawing.add(String(plot.x + plot.width / 2, 15, x_label, textAnchor="middle", fontSize=10))
    drawing.add(String(15, plot.y + plot.height / 2, y_label, textAnchor="middle", fontSize=10))

    legend = Legend()
    legend.x, legend.y = plot.x + plot.width + 15, plot.y + plot.height
    legend.alignment = "right"
    legend.colorNamePairs = [(_SERIES_COLORS[i % len(_SERIES_COLORS)], name) for i, name in enumerate(names)]
    drawing.add(legend)

    path.parent.mkdir(parents=True, exist_ok=True)
    renderSVG.drawToFile(drawing, str(path))
    logger.debug("Wrote chart %s (%d series)", path, len(names))
    return path


# --------------------------------------------------------------------------------------
# PDF
# --------------------------------------------------------------------------------------


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return format_value(value)


def export_pdf(
    path: Path,
    manifest: Mapping[str, Any],
    *,
    constants: Mapping[str, Any] | None = None,
    tables: Mapping[str, pd.DataFrame] | None = None,
    max_rows: int = 40,
) -> Path:
    """One summary page per section: run settings, constants, then each table."""
    path.parent.mkdir(parents=True, exist_ok=True)
    c = canvas.Canvas(str(path), pagesize=A4, invariant=1)
    width, height = A4

    normal = ParagraphStyle("normal", fontSize=9, leading=11)
    header = ParagraphStyle("header", fontSize=14, leading=16, spaceAfter=12)
    table_style = TableStyle(
        [
            ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
            ("GRID", (0, 0), (-1, -1), 0.25, colors.grey),
            ("FONTSIZE", (0, 0), (-1, -1), 7),
            ("VALIGN", (0, 0), (-1, -1), "TOP"),
        ]
    )

    def add_paragraph(text: str, style: ParagraphStyle, y: float) -> float:
        para = Paragraph(text.replace("\n", "<br/>"), style)
        _, h = para.wrap(width - 4 * cm, height)
        para.drawOn(c, 2 * cm, y - h)
        return y - h - 0.4 * cm

    def add_table(data: List[List[str]], y: float) -> float:
        tbl = Table(data)
        tbl.setStyle(table_style)
        _, h = tbl.wrap(width - 4 * cm, y)
        tbl.drawOn(c, 2 * cm, y - h)
        return y - h - 0.8 * cm

    config = manifest.get("config", {})
    y_pos = height - 2 * cm
    y_pos = add_paragraph(f"phmc_coupling run: {config.get('command', '')}", header, y_pos)
    y_pos = add_paragraph(
        f"library {manifest.get('library_version')}, schema {manifest.get('schema_version')}, seed {manifest.get('seed')}",
        normal,
        y_pos,
    )
    rows = [["setting", "value"]] + [[str(k), json.dumps(_jsonable(v))[:90]] for k, v in sorted(config.items())]
    y_pos = add_table(rows, y_pos)

    if constants:
        c.showPage()
        y_pos = add_paragraph("Constants", header, height - 2 * cm)
        flat = [["key", "value"]] + [[str(k), _cell(v) if not isinstance(v, Mapping) else json.dumps(_jsonable(v))[:90]] for k, v in constants.items()]
        add_table(flat[:max_rows], y_pos)

    for name, frame in (tables or {}).items():
        c.showPage()
        y_pos = add_paragraph(name, header, height - 2 * cm)
        data = [list(map(str, frame.columns))] + [[_cell(v) for v in row] for row in frame.head(max_rows).itertuples(index=False, name=None)]
        add_table(data, y_pos)
        if len(frame) > max_rows:
            add_paragraph(f"({len(frame) - max_rows} further rows in the CSV)", normal, 2.5 * cm)

    c.save()
    logger.info("PDF report saved: %s", path.name)
    return path
