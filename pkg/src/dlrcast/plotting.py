"""Static SVG interval charts built with the standard library XML writer."""
from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

SVG_NS = "http://www.w3.org/2000/svg"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def band_chart(y_true, lower, upper, path, title: str = "", width: int = 720, height: int = 320,
               robust_label: str = "lower bound (robust DLR)") -> None:
    """Write a band chart: the [lower, upper] interval as one polygon, plus
    two polylines for the observed rating and the lower bound."""
    y_true, lower, upper = (np.asarray(a, dtype=float).ravel() for a in (y_true, lower, upper))
    if not (len(y_true) == len(lower) == len(upper)) or len(y_true) == 0:
        raise ValueError("series must be non-empty and equally long")
    margin_l, margin_r, margin_t, margin_b = 60, 20, 30, 40
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    lo = float(min(y_true.min(), lower.min()))
    hi = float(max(y_true.max(), upper.max()))
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    n = len(y_true)

    def x_of(i):
        return margin_l + (plot_w * i / (n - 1) if n > 1 else plot_w / 2)

    def y_of(v):
        return margin_t + plot_h * (hi - v) / (hi - lo)

    ET.register_namespace("", SVG_NS)
    svg = ET.Element(f"{{{SVG_NS}}}svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, f"{{{SVG_NS}}}title").text = title or "prediction interval"
    ET.SubElement(svg, f"{{{SVG_NS}}}rect", x=str(margin_l), y=str(margin_t), width=str(plot_w),
                  height=str(plot_h), fill="none", stroke="#999999")

    upper_pts = [f"{_fmt(x_of(i))},{_fmt(y_of(v))}" for i, v in enumerate(upper)]
    lower_pts = [f"{_fmt(x_of(i))},{_fmt(y_of(v))}" for i, v in reversed(list(enumerate(lower)))]
    ET.SubElement(svg, f"{{{SVG_NS}}}polygon", points=" ".join(upper_pts + lower_pts),
                  fill="#e06666", attrib={"fill-opacity": "0.3", "class": "band"})

    for series, colour, label in ((y_true, "#000000", "observed"), (lower, "#cc0000", robust_label)):
        d = "M " + " L ".join(f"{_fmt(x_of(i))} {_fmt(y_of(v))}" for i, v in enumerate(series))
        ET.SubElement(svg, f"{{{SVG_NS}}}path", d=d, fill="none", stroke=colour,
                      attrib={"stroke-width": "1.5", "class": "series", "data-label": label})

    for v in (lo, (lo + hi) / 2, hi):
        text = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(margin_l - 5), y=_fmt(y_of(v) + 4),
                             attrib={"text-anchor": "end", "font-size": "10"})
        text.text = f"{v:.0f}"
    xlabel = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(margin_l + plot_w / 2), y=str(height - 10),
                           attrib={"text-anchor": "middle", "font-size": "11"})
    xlabel.text = f"hour (0..{n - 1})"
    if title:
        head = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(margin_l), y="18",
                             attrib={"font-size": "12"})
        head.text = title
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
