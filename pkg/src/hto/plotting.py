"""Static SVG renditions of the CSV reports (curves, histograms, spectra)."""
import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ._io import atomic_write_bytes  # noqa: E402
from .errors import ConfigError, ParseError  # noqa: E402

KINDS = ("curve", "histogram", "spectrum")
SCHEMAS = {
    "curve": ("epsilon_mw",),  # plus at least one accuracy column
    "histogram": ("bin_center_mw", "count"),
    "spectrum": ("freq_mhz", "magnitude"),
}
LABELS = {
    "curve": ("noise budget (mW)", "accuracy (%)"),
    "histogram": ("patch value (mW)", "count"),
    "spectrum": ("frequency (MHz)", "magnitude (mW)"),
}


def read_table(csv_path):
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{csv_path}: empty file", row=1)
    header, body = rows[0], [r for r in rows[1:] if r]
    columns = {name: [] for name in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{csv_path}: expected {len(header)} cells", row=lineno)
        for name, cell in zip(header, row):
            try:
                columns[name].append(float(cell) if cell != "" else float("nan"))
            except ValueError:
                raise ParseError(f"{csv_path}: non-numeric cell {cell!r} in {name}", row=lineno) from None
    return header, columns


def _check_schema(header, kind):
    expected = SCHEMAS[kind]
    if kind == "curve":
        ok = header[:1] == ["epsilon_mw"] and len(header) >= 2
        want = "epsilon_mw followed by one or more accuracy columns"
    else:
        ok = tuple(header) == expected
        want = ",".join(expected)
    if not ok:
        raise ConfigError(f"{kind} CSV must have columns {want}; found {','.join(header)}")


def render_svg(csv_path, kind, svg_path=None, title=None):
    """Render a report CSV to SVG; returns the SVG path.

    The output is byte-stable: fixed hash salt, no timestamp metadata.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; expected one of {', '.join(KINDS)}")
    csv_path = Path(csv_path)
    svg_path = Path(svg_path) if svg_path else csv_path.with_suffix(".svg")
    header, cols = read_table(csv_path)
    _check_schema(header, kind)
    n = len(cols[header[0]])

    with plt.rc_context({"svg.hashsalt": "hto", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        if n == 0:
            ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
        elif kind == "curve":
            x = cols["epsilon_mw"]
            for name in header[1:]:
                ax.plot(x, cols[name], marker="o", label=name)
            ax.legend()
        elif kind == "histogram":
            x = cols["bin_center_mw"]
            width = (x[1] - x[0]) if n > 1 else 1.0
            ax.bar(x, cols["count"], width=0.9 * width)
        else:
            ax.plot(cols["freq_mhz"], cols["magnitude"], lw=1)
        xlabel, ylabel = LABELS[kind]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    atomic_write_bytes(svg_path, buf.getvalue())
    return svg_path
