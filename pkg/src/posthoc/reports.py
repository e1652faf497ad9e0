"""Report emission: CSV tables, JSON bundles, and dependency-free SVG plots.

Every artifact embeds the effective configuration: CSV files as leading
``#``-comment lines, JSON under a "config" key, SVG inside a <desc> element.
Human-facing CSV tables follow the publication style: bounds truncated (not
rounded) to two decimals and rows without any detected signal omitted; the
JSON keeps every cluster at full precision.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.etree import ElementTree as ET

import numpy as np

from .bench import BenchResult, CoverageReport
from .bounds import ConfidenceCurve
from .clusters import ClusterTable
from .errors import FormatError, IoError

CURVE_GUIDE_Z = (3.0, 3.5, 4.0, 4.5)

_METHOD_COLORS = {
    "Simes": "#7f7f7f",
    "ARI": "#1f77b4",
    "pARI": "#d62728",
    "Notip": "#2ca02c",
}
_FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#17becf")


def truncate2(x: float) -> float:
    """Truncate toward zero at two decimals (0.668 -> 0.66), table style."""
    return math.floor(x * 100.0 + 1e-9) / 100.0 if x >= 0 else -truncate2(-x)


def format_cell(x: float) -> str:
    """Table cell: integers render bare, everything else truncated to 2 dp."""
    t = truncate2(float(x))
    if t == int(t):
        return str(int(t))
    return f"{t:.2f}"


def _config_comment_lines(config: dict) -> list[str]:
    flat = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return [f"# config {flat}"]


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def cluster_csv_from_payload(payload: dict) -> str:
    lines = _config_comment_lines(payload["config"])
    lines.append(
        f"# z_threshold = {payload['z_threshold']:g},"
        f" connectivity = {payload['connectivity']}"
    )
    methods = list(payload["methods"])
    lines.append(",".join(["ID", "X", "Y", "Z", "PeakStat", "Size_mm3"] + methods))
    for entry in payload["clusters"]:
        if not entry["reportable"]:
            continue
        x, y, z = entry["peak_world"]
        cells = [
            str(entry["id"]),
            format_cell(x),
            format_cell(y),
            format_cell(z),
            format_cell(entry["peak_stat"]),
            format_cell(entry["size_mm3"]),
        ]
        cells += [format_cell(entry["bounds"][m]) for m in methods]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cluster_table_csv(table: ClusterTable, config: dict) -> str:
    return cluster_csv_from_payload(cluster_table_json_dict(table, config))


def cluster_table_json_dict(table: ClusterTable, config: dict) -> dict:
    clusters = []
    for cluster, row, keep, best in zip(
        table.clusters, table.bounds, table.reportable, table.best
    ):
        clusters.append(
            {
                "id": cluster.id,
                "peak_world": list(cluster.peak_world),
                "peak_index": cluster.peak_index,
                "peak_stat": cluster.peak_stat,
                "size_vox": cluster.size,
                "size_mm3": cluster.size_mm3,
                "bounds": {m: row[m] for m in table.methods},
                "best_methods": sorted(best),
                "reportable": keep,
            }
        )
    return {
        "config": config,
        "z_threshold": table.z_threshold,
        "connectivity": table.connectivity,
        "methods": table.methods,
        "clusters": clusters,
    }


def curve_csv_from_payload(payload: dict) -> str:
    methods = list(payload.get("methods", payload["bounds"]))
    lines = _config_comment_lines(payload["config"])
    lines.append(f"# curve guides z = {payload['guide_z']}")
    lines.append(",".join(["k", "z_at_k"] + methods))
    for i, k in enumerate(payload["k"]):
        cells = [str(int(k)), repr(float(payload["z_at_k"][i]))]
        cells += [repr(float(payload["bounds"][m][i])) for m in methods]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def curve_csv(curve: ConfidenceCurve, config: dict) -> str:
    return curve_csv_from_payload(curve_json_dict(curve, config))


def curve_json_dict(curve: ConfidenceCurve, config: dict) -> dict:
    # "methods" pins the column order; JSON serializers may sort dict keys
    return {
        "config": config,
        "guide_z": list(CURVE_GUIDE_Z),
        "methods": list(curve.bounds),
        "k": [int(k) for k in curve.ks],
        "z_at_k": [float(v) for v in curve.z_at_k],
        "bounds": {m: [float(v) for v in vec] for m, vec in curve.bounds.items()},
    }


def _method_color(name: str, index: int) -> str:
    return _METHOD_COLORS.get(name, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


class _Plot:
    """Minimal SVG canvas with data-space mapping on a log-x axis."""

    W, H = 720, 480
    LEFT, RIGHT, TOP, BOTTOM = 64, 24, 28, 46

    def __init__(self, title: str, config: dict, x_label: str, log_x: bool,
                 x_range: tuple[float, float], y_range: tuple[float, float]):
        self.root = ET.Element(
            "svg",
            {
                "xmlns": "http://www.w3.org/2000/svg",
                "width": str(self.W),
                "height": str(self.H),
                "viewBox": f"0 0 {self.W} {self.H}",
            },
        )
        desc = ET.SubElement(self.root, "desc")
        desc.text = json.dumps(config, sort_keys=True)
        ET.SubElement(
            self.root,
            "rect",
            {"x": "0", "y": "0", "width": str(self.W), "height": str(self.H), "fill": "white"},
        )
        self.log_x = log_x
        self.x0, self.x1 = x_range
        if log_x:
            self.x0, self.x1 = math.log10(max(self.x0, 1e-12)), math.log10(self.x1)
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        self._text(self.W / 2, 18, title, anchor="middle", size=14)
        self._text(self.W / 2, self.H - 10, x_label, anchor="middle")
        axis = {"stroke": "#222", "stroke-width": "1"}
        self._line(self.LEFT, self.H - self.BOTTOM, self.W - self.RIGHT, self.H - self.BOTTOM, axis)
        self._line(self.LEFT, self.TOP, self.LEFT, self.H - self.BOTTOM, axis)

    def px(self, x: float) -> float:
        if self.log_x:
            x = math.log10(max(x, 1e-12))
        frac = (x - self.x0) / (self.x1 - self.x0)
        return self.LEFT + frac * (self.W - self.LEFT - self.RIGHT)

    def py(self, y: float) -> float:
        frac = (y - self.y0) / (self.y1 - self.y0)
        return self.H - self.BOTTOM - frac * (self.H - self.TOP - self.BOTTOM)

    def _line(self, x1, y1, x2, y2, attrs):
        ET.SubElement(
            self.root,
            "line",
            {"x1": f"{x1:.2f}", "y1": f"{y1:.2f}", "x2": f"{x2:.2f}", "y2": f"{y2:.2f}", **attrs},
        )

    def _text(self, x, y, s, anchor="start", size=11, fill="#222"):
        el = ET.SubElement(
            self.root,
            "text",
            {
                "x": f"{x:.2f}",
                "y": f"{y:.2f}",
                "text-anchor": anchor,
                "font-family": "sans-serif",
                "font-size": str(size),
                "fill": fill,
            },
        )
        el.text = s

    def y_ticks(self, values):
        for v in values:
            y = self.py(v)
            self._line(self.LEFT - 4, y, self.LEFT, y, {"stroke": "#222"})
            self._text(self.LEFT - 8, y + 4, f"{v:g}", anchor="end")

    def x_ticks(self, values):
        for v in values:
            x = self.px(v)
            self._line(x, self.H - self.BOTTOM, x, self.H - self.BOTTOM + 4, {"stroke": "#222"})
            self._text(x, self.H - self.BOTTOM + 16, f"{v:g}", anchor="middle")

    def polyline(self, xs, ys, color):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        ET.SubElement(
            self.root,
            "polyline",
            {"points": pts, "fill": "none", "stroke": color, "stroke-width": "1.8"},
        )

    def circle(self, x, y, color):
        ET.SubElement(
            self.root,
            "circle",
            {
                "cx": f"{self.px(x):.2f}",
                "cy": f"{self.py(y):.2f}",
                "r": "4",
                "fill": color,
                "fill-opacity": "0.75",
            },
        )

    def vline(self, x, label):
        xp = self.px(x)
        self._line(
            xp, self.TOP, xp, self.H - self.BOTTOM,
            {"stroke": "#555", "stroke-width": "1", "stroke-dasharray": "2,4"},
        )
        self._text(xp + 3, self.TOP + 12, label, size=10, fill="#555")

    def legend(self, names_colors):
        x = self.W - self.RIGHT - 110
        y = self.TOP + 8
        for i, (name, color) in enumerate(names_colors):
            yy = y + 16 * i
            self._line(x, yy - 4, x + 22, yy - 4, {"stroke": color, "stroke-width": "2"})
            self._text(x + 28, yy, name)

    def to_string(self) -> str:
        return ET.tostring(self.root, encoding="unicode")


def curve_svg_from_payload(payload: dict) -> str:
    ks = np.asarray(payload["k"], dtype=np.int64)
    z_at_k = np.asarray(payload["z_at_k"], dtype=np.float64)
    m_max = int(ks[-1])
    plot = _Plot(
        "TDP lower bound for top-k voxel sets",
        payload["config"],
        "k (set size, log scale)",
        log_x=True,
        x_range=(1.0, float(m_max)),
        y_range=(0.0, 1.0),
    )
    plot.y_ticks([0, 0.25, 0.5, 0.75, 1.0])
    ticks = [10.0**e for e in range(0, int(math.floor(math.log10(m_max))) + 1)]
    plot.x_ticks(ticks)
    # dotted guides where the ranked |Z| crosses the usual thresholds
    for zv in payload["guide_z"]:
        at = np.flatnonzero(z_at_k >= zv)
        if at.size == 0:
            continue
        plot.vline(float(ks[at[-1]]), f"z={zv:g}")
    entries = []
    methods = list(payload.get("methods", payload["bounds"]))
    for i, name in enumerate(methods):
        color = _method_color(name, i)
        plot.polyline(ks.astype(float), payload["bounds"][name], color)
        entries.append((name, color))
    plot.legend(entries)
    return plot.to_string()


def curve_svg(curve: ConfidenceCurve, config: dict) -> str:
    return curve_svg_from_payload(curve_json_dict(curve, config))


def scatter_svg_from_payload(payload: dict) -> str:
    sizes = [entry["size_mm3"] for entry in payload["clusters"]]
    x_hi = max(sizes) * 1.3 if sizes else 10.0
    plot = _Plot(
        f"TDP bound vs cluster size at z >= {payload['z_threshold']:g}",
        payload["config"],
        "cluster size (mm3, log scale)",
        log_x=True,
        x_range=(1.0, x_hi),
        y_range=(0.0, 1.0),
    )
    plot.y_ticks([0, 0.25, 0.5, 0.75, 1.0])
    decades = range(0, int(math.floor(math.log10(x_hi))) + 1) if x_hi > 1 else [0]
    plot.x_ticks([10.0**e for e in decades])
    entries = []
    for i, method in enumerate(payload["methods"]):
        color = _method_color(method, i)
        entries.append((method, color))
        for entry in payload["clusters"]:
            plot.circle(entry["size_mm3"], entry["bounds"][method], color)
    plot.legend(entries)
    return plot.to_string()


def scatter_svg(table: ClusterTable, config: dict) -> str:
    return scatter_svg_from_payload(cluster_table_json_dict(table, config))


def _ztag(z: float) -> str:
    return f"{z:g}".replace(".", "p").replace("-", "m")


def _emit_payloads(
    tables: list[dict],
    curve: dict,
    formats: tuple[str, ...],
    out: Path,
    extra_json: dict | None = None,
) -> list[Path]:
    written = []
    if "csv" in formats:
        for payload in tables:
            path = out / f"clusters_z{_ztag(payload['z_threshold'])}.csv"
            written.append(_write_text(path, cluster_csv_from_payload(payload)))
        written.append(_write_text(out / "curve.csv", curve_csv_from_payload(curve)))
    if "json" in formats:
        for payload in tables:
            path = out / f"clusters_z{_ztag(payload['z_threshold'])}.json"
            written.append(_write_text(path, json.dumps(payload, indent=2, sort_keys=True)))
        written.append(
            _write_text(out / "curve.json", json.dumps(curve, indent=2, sort_keys=True))
        )
        if extra_json is not None:
            written.append(
                _write_text(
                    out / "bench.json", json.dumps(extra_json, indent=2, sort_keys=True)
                )
            )
    if "svg" in formats:
        written.append(_write_text(out / "curve.svg", curve_svg_from_payload(curve)))
        for payload in tables:
            path = out / f"scatter_z{_ztag(payload['z_threshold'])}.svg"
            written.append(_write_text(path, scatter_svg_from_payload(payload)))
    return written


def emit_report(
    result: BenchResult, formats: tuple[str, ...], out_dir: str | Path
) -> list[Path]:
    """Write the benchmark bundle in the requested formats; returns paths."""
    tables = [cluster_table_json_dict(t, result.config) for t in result.tables]
    curve = curve_json_dict(result.curve, result.config)
    return _emit_payloads(
        tables, curve, formats, Path(out_dir), extra_json=bench_json_dict(result)
    )


def emit_report_from_bundle(
    bundle: dict, formats: tuple[str, ...], out_dir: str | Path
) -> list[Path]:
    """Re-render artifacts from a saved bench.json without recomputing."""
    try:
        tables = bundle["tables"]
        curve = bundle["curve"]
    except KeyError as exc:
        raise FormatError(f"bundle is missing the {exc} section") from exc
    return _emit_payloads(tables, curve, formats, Path(out_dir))


def bench_json_dict(result: BenchResult) -> dict:
    calibration = {}
    for name, res in result.analysis.calibrations.items():
        calibration[name] = {
            "lambda_star": res.lambda_star,
            "k_alpha": res.k_alpha,
            "curve_index": res.curve_index,
        }
    templates = {
        name: tpl.to_json_dict() for name, tpl in result.analysis.templates.items()
    }
    # thresholds vectors can be huge; keep the JSON bundle honest but bounded
    for tpl in templates.values():
        if len(tpl["thresholds"]) > 2000:
            tpl["thresholds_head"] = tpl["thresholds"][:16]
            tpl["thresholds"] = None
    return {
        "config": result.config,
        "pi0": result.pi0,
        "calibration": calibration,
        "templates": templates,
        "tables": [
            cluster_table_json_dict(t, result.config) for t in result.tables
        ],
        "curve": curve_json_dict(result.curve, result.config),
        "scatter": result.scatter,
        "true_tdp_by_table": result.true_tdp_by_table,
    }


def coverage_csv(report: CoverageReport) -> str:
    lines = _config_comment_lines(report.config)
    lines.append("method,violations,n_reps,frequency,wilson_lo,wilson_hi,budget")
    for m in report.methods:
        lo, hi = report.wilson[m]
        lines.append(
            ",".join(
                [
                    m,
                    str(report.violations[m]),
                    str(report.n_reps),
                    repr(report.frequency[m]),
                    repr(lo),
                    repr(hi),
                    repr(report.budget),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def coverage_json_dict(report: CoverageReport) -> dict:
    return {
        "config": report.config,
        "n_reps": report.n_reps,
        "alpha": report.alpha,
        "budget": report.budget,
        "methods": list(report.methods),
        "violations": report.violations,
        "frequency": report.frequency,
        "wilson": {m: list(v) for m, v in report.wilson.items()},
    }


def emit_coverage(
    report: CoverageReport, formats: tuple[str, ...], out_dir: str | Path
) -> list[Path]:
    out = Path(out_dir)
    written = []
    if "csv" in formats:
        written.append(_write_text(out / "coverage.csv", coverage_csv(report)))
    if "json" in formats:
        written.append(
            _write_text(
                out / "coverage.json",
                json.dumps(coverage_json_dict(report), indent=2, sort_keys=True),
            )
        )
    return written
