"""Accuracy-vs-shots line plot written directly as SVG."""

import logging
from pathlib import Path

from lxml import etree

from app.utils.errors import StorageError

__all__ = ["accuracy_vs_shots_svg", "write_svg"]

LOGGER = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH, HEIGHT = 640, 420
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _el(parent, tag: str, **attrs):
    return etree.SubElement(parent, f"{{{SVG_NS}}}{tag}", {k.replace("_", "-"): str(v) for k, v in attrs.items()})


def accuracy_vs_shots_svg(series: dict[str, list[tuple[int, float]]], title: str = "Accuracy vs shots") -> bytes:
    """One polyline per method; x is shots (evenly spaced categories), y is mean accuracy in [0, 1]."""
    root = etree.Element(f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS},
                         width=str(WIDTH), height=str(HEIGHT), viewBox=f"0 0 {WIDTH} {HEIGHT}")
    _el(root, "rect", x=0, y=0, width=WIDTH, height=HEIGHT, fill="white")
    title_el = _el(root, "text", x=WIDTH / 2, y=24, text_anchor="middle", font_size=16)
    title_el.text = title

    shots = sorted({s for points in series.values() for s, _ in points})
    plot_w, plot_h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(s: int) -> float:
        if len(shots) == 1:
            return MARGIN + plot_w / 2
        return MARGIN + plot_w * shots.index(s) / (len(shots) - 1)

    def py(acc: float) -> float:
        return MARGIN + plot_h * (1.0 - acc)

    _el(root, "line", x1=MARGIN, y1=MARGIN + plot_h, x2=MARGIN + plot_w, y2=MARGIN + plot_h, stroke="black")
    _el(root, "line", x1=MARGIN, y1=MARGIN, x2=MARGIN, y2=MARGIN + plot_h, stroke="black")
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        label = _el(root, "text", x=MARGIN - 8, y=f"{py(tick) + 4:.1f}", text_anchor="end", font_size=11)
        label.text = f"{tick:.2f}"
    for s in shots:
        label = _el(root, "text", x=f"{px(s):.1f}", y=MARGIN + plot_h + 18, text_anchor="middle", font_size=11)
        label.text = str(s)
    x_label = _el(root, "text", x=WIDTH / 2, y=HEIGHT - 12, text_anchor="middle", font_size=12)
    x_label.text = "shots per class"

    for i, (method, points) in enumerate(sorted(series.items())):
        color = COLORS[i % len(COLORS)]
        ordered = sorted(points)
        coords = " ".join(f"{px(s):.1f},{py(a):.1f}" for s, a in ordered)
        _el(root, "polyline", points=coords, fill="none", stroke=color, stroke_width=2, data_method=method)
        for s, a in ordered:
            _el(root, "circle", cx=f"{px(s):.1f}", cy=f"{py(a):.1f}", r=3, fill=color)
        legend = _el(root, "text", x=WIDTH - MARGIN, y=MARGIN + 16 * i, text_anchor="end",
                     font_size=12, fill=color)
        legend.text = method

    return etree.tostring(root, xml_declaration=True, encoding="utf-8", pretty_print=True)


def write_svg(data: bytes, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path
