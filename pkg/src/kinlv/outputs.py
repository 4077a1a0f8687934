"""File outputs: atomic CSV/JSON writes, run manifests and a small SVG emitter."""

from __future__ import annotations

import hashlib
import html
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def columns_text(cols: Mapping[str, np.ndarray]) -> str:
    header = list(cols)
    arrays = [np.asarray(cols[h]) for h in header]
    return csv_text(header, zip(*arrays))


def atomic_write(path: str | Path, data: str | bytes) -> Path:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a CSV written by this package."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]) if len(lines) > 1 else np.empty((0, len(header)))
    return header, body


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


@dataclass
class Manifest:
    command: str
    config: dict
    seed: int | None = None
    version: str = __version__
    started: float = field(default_factory=time.time)
    finished: float | None = None
    outputs: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, path: Path, root: Path) -> None:
        self.outputs.append({"path": str(path.relative_to(root)), "sha256": sha256_file(path)})

    def to_dict(self) -> dict:
        return {
            "tool": "kinlv",
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "config": self.config,
            "outputs": self.outputs,
            "extra": self.extra,
        }

    def write(self, outdir: Path, name: str = "manifest.json") -> Path:
        self.finished = time.time()
        return atomic_write(outdir / name, json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path: Path, doc: Any) -> Path:
    return atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def verify_manifest(path: str | Path) -> list[str]:
    """Recompute digests; returns the list of mismatching or missing outputs."""
    path = Path(path)
    doc = json.loads(path.read_text())
    bad = []
    for entry in doc.get("outputs", []):
        f = path.parent / entry["path"]
        if not f.exists() or sha256_file(f) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


# ---------------------------------------------------------------------------
# SVG


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Panel:
    title: str
    x: np.ndarray
    series: dict[str, np.ndarray]
    xlabel: str = "t"
    ylabel: str = ""
    dashed: tuple[str, ...] = ()


def _nice_ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 1e-9, step)


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def svg_figure(panels: Sequence[Panel], *, title: str, digest: str, width: int = 720, panel_height: int = 260) -> str:
    """Self-contained SVG with one line plot per panel."""
    margin_l, margin_r, margin_t, margin_b = 70, 150, 40, 45
    height = 30 + len(panels) * (panel_height + margin_t + margin_b)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<metadata>kinlv {html.escape(__version__)} sha256:{digest}</metadata>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{html.escape(title)}</text>',
    ]
    pw = width - margin_l - margin_r
    for k, panel in enumerate(panels):
        top = 30 + k * (panel_height + margin_t + margin_b) + margin_t
        x = np.asarray(panel.x, float)
        ys = [np.asarray(v, float) for v in panel.series.values()]
        finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([0.0, 1.0])
        ylo, yhi = float(finite.min()), float(finite.max())
        pad = 0.05 * (yhi - ylo if yhi > ylo else max(abs(yhi), 1.0))
        ylo, yhi = ylo - pad, yhi + pad
        xlo, xhi = float(x.min()), float(x.max())
        if xhi <= xlo:
            xhi = xlo + 1

        def sx(v):
            return margin_l + (v - xlo) / (xhi - xlo) * pw

        def sy(v):
            return top + panel_height - (v - ylo) / (yhi - ylo) * panel_height

        out.append(f'<text x="{margin_l}" y="{top - 8}" font-size="12">{html.escape(panel.title)}</text>')
        out.append(
            f'<rect x="{margin_l}" y="{top}" width="{pw}" height="{panel_height}" fill="none" stroke="black"/>'
        )
        for tv in _nice_ticks(xlo, xhi):
            px = sx(tv)
            out.append(f'<line x1="{px:.2f}" y1="{top + panel_height}" x2="{px:.2f}" y2="{top + panel_height + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{top + panel_height + 16}" text-anchor="middle">{_tick_label(tv)}</text>')
        for tv in _nice_ticks(ylo, yhi):
            py = sy(tv)
            out.append(f'<line x1="{margin_l - 4}" y1="{py:.2f}" x2="{margin_l}" y2="{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{margin_l - 6}" y="{py + 4:.2f}" text-anchor="end">{_tick_label(tv)}</text>')
        out.append(
            f'<text x="{margin_l + pw / 2}" y="{top + panel_height + 32}" text-anchor="middle">{html.escape(panel.xlabel)}</text>'
        )
        if panel.ylabel:
            cy = top + panel_height / 2
            out.append(
                f'<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{html.escape(panel.ylabel)}</text>'
            )
        for j, (name, y) in enumerate(panel.series.items()):
            color = _PALETTE[j % len(_PALETTE)]
            ok = np.isfinite(y)
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], np.asarray(y)[ok]))
            dash = ' stroke-dasharray="6,4"' if name in panel.dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            ly = top + 14 + 16 * j
            lx = margin_l + pw + 12
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{lx + 26}" y="{ly}">{html.escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
