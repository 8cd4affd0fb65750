"""Render figures from simulator result CSVs.

Strictly a presentation layer: every number that appears in a figure is a
cell of the input CSV, and the extracted-series return value lets tests
confirm that by reading the values back out of the matplotlib artists
after plotting.  Nothing here runs simulations or recomputes metrics.
"""

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# pinned so identical inputs give identical image bytes
STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "figure.figsize": (7.0, 4.2),
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.framealpha": 1.0,
}

PNG_METADATA = {"Software": "btbplots"}


class PlotError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_in: str
    image_out: str
    xlabel: str = ""
    ylabel: str = ""


def load_rows(path):
    """Rows as string dicts; tolerates the harness's leading '# k=v' line."""
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("#"):
            f.seek(0)
        rows = list(csv.DictReader(f))
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return rows


def _require(rows, needed, path):
    missing = [c for c in needed if c not in rows[0]]
    if missing:
        raise PlotError(f"{path}: missing columns {missing}")


def _point_value(point, axis=None):
    """'latency=3' -> (axis, 3.0); rows without '=' (base points) -> None."""
    name, sep, value = point.partition("=")
    if not sep:
        return None
    if axis is not None and name != axis:
        return None
    return name, float(value)


# ---------------------------------------------------------------------------
# figure builders: plot, then read the data back off the artists


def _extract_lines(ax):
    return {
        line.get_label(): [(x, y) for x, y in line.get_xydata()]
        for line in ax.get_lines()
    }


def _extract_bars(ax):
    return {
        container.get_label(): list(container.datavalues)
        for container in ax.containers
    }


ORG_BAR_METRICS = ("mpki", "scki", "ipc_proxy")


def _org_comparison_bars(rows, spec, ax):
    _require(rows, ("org",) + ORG_BAR_METRICS, spec.csv_in)
    orgs = []
    for row in rows:
        if row["org"] not in orgs:
            orgs.append(row["org"])
    by_org = {row["org"]: row for row in rows}
    width = 0.8 / len(orgs)
    for i, org in enumerate(orgs):
        xs = [g + i * width for g in range(len(ORG_BAR_METRICS))]
        ys = [float(by_org[org][m]) for m in ORG_BAR_METRICS]
        ax.bar(xs, ys, width=width, label=org)
    ax.set_xticks([g + 0.4 - width / 2 for g in range(len(ORG_BAR_METRICS))])
    ax.set_xticklabels(ORG_BAR_METRICS)
    ax.set_xlabel(spec.xlabel or "metric")
    ax.set_ylabel(spec.ylabel or "value")
    ax.legend()
    return _extract_bars(ax)


def _sensitivity_lines(rows, spec, ax):
    _require(rows, ("org", "point", "mpki"), spec.csv_in)
    series = {}
    axis = None
    for row in rows:
        parsed = _point_value(row["point"])
        if parsed is None:
            continue
        axis = parsed[0]
        series.setdefault(row["org"], []).append((parsed[1], float(row["mpki"])))
    if not series:
        raise PlotError(f"{spec.csv_in}: no swept points (point column "
                        f"has no axis=value entries)")
    for org, pts in series.items():
        pts.sort()
        ax.plot([x for x, _ in pts], [y for _, y in pts], marker="o", label=org)
    ax.set_xlabel(spec.xlabel or axis)
    ax.set_ylabel(spec.ylabel or "mpki")
    ax.legend()
    return _extract_lines(ax)


def _offset_cdf(rows, spec, ax):
    _require(rows, ("kind", "width", "cumulative_fraction"), spec.csv_in)
    series = {}
    for row in rows:
        series.setdefault(row["kind"], []).append(
            (int(row["width"]), float(row["cumulative_fraction"]))
        )
    for kind, pts in series.items():
        pts.sort()
        ax.plot([x for x, _ in pts], [y for _, y in pts], label=kind)
    ax.set_xlabel(spec.xlabel or "offset magnitude bits")
    ax.set_ylabel(spec.ylabel or "cumulative fraction of dynamic branches")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    return _extract_lines(ax)


def _variant_evictions(rows, spec, ax):
    _require(rows, ("org", "point", "evictions"), spec.csv_in)
    series = {}
    for row in rows:
        parsed = _point_value(row["point"], axis="variants")
        if parsed is None:
            continue
        series.setdefault(row["org"], []).append(
            (parsed[1], float(row["evictions"]))
        )
    if not series:
        raise PlotError(f"{spec.csv_in}: no variants=N points")
    width = 0.8 / len(series)
    for i, (org, pts) in enumerate(series.items()):
        pts.sort()
        xs = [x + i * width for x, _ in pts]
        ax.bar(xs, [y for _, y in pts], width=width, label=org)
    ax.set_xticks([x + 0.4 - width / 2 for x, _ in next(iter(series.values()))])
    ax.set_xticklabels([f"{int(x)}" for x, _ in next(iter(series.values()))])
    ax.set_xlabel(spec.xlabel or "variant mode")
    ax.set_ylabel(spec.ylabel or "branches displaced")
    ax.legend()
    return _extract_bars(ax)


FIGURE_KINDS = {
    "org-comparison-bars": _org_comparison_bars,
    "sensitivity-lines": _sensitivity_lines,
    "offset-cdf": _offset_cdf,
    "variant-evictions": _variant_evictions,
}


def build_figure(spec):
    """Returns (figure, extracted series) without writing anything."""
    if spec.kind not in FIGURE_KINDS:
        raise PlotError(f"unknown figure kind {spec.kind!r}")
    rows = load_rows(spec.csv_in)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            series = FIGURE_KINDS[spec.kind](rows, spec, ax)
        except Exception:
            plt.close(fig)
            raise
        fig.tight_layout()
    return fig, series


def render(spec):
    """Build the figure and write spec.image_out; returns extracted series."""
    fig, series = build_figure(spec)
    try:
        with plt.rc_context(STYLE):
            fig.savefig(spec.image_out, format="png", metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    return series
