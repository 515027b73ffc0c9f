import logging

from lxml import etree

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"

# cluster 0 orange, cluster 1 blue
CLUSTER_COLORS = (
    "#f28e2b",
    "#4e79a7",
    "#59a14f",
    "#e15759",
    "#76b7b2",
    "#edc948",
    "#b07aa1",
    "#ff9da7",
)


def cluster_color(cluster_id):
    return CLUSTER_COLORS[cluster_id % len(CLUSTER_COLORS)]


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


class SvgCanvas:
    """Small builder over an lxml tree; output is byte-stable for identical calls"""

    def __init__(self, width, height, title=None):
        self.width = width
        self.height = height
        self.root = etree.Element(
            f"{{{SVG_NS}}}svg",
            nsmap={None: SVG_NS},
            version="1.1",
            width=_fmt(width),
            height=_fmt(height),
            viewBox=f"0 0 {_fmt(width)} {_fmt(height)}",
        )
        if title:
            etree.SubElement(self.root, f"{{{SVG_NS}}}title").text = title

    def _add(self, tag, parent=None, text=None, **attrs):
        element = etree.SubElement(
            self.root if parent is None else parent,
            f"{{{SVG_NS}}}{tag}",
            {key.replace("_", "-"): _fmt(value) for key, value in attrs.items()},
        )
        if text is not None:
            element.text = str(text)
        return element

    def group(self, **attrs):
        return self._add("g", **attrs)

    def rect(self, x, y, width, height, fill, parent=None, **attrs):
        return self._add("rect", parent=parent, x=x, y=y, width=width, height=height, fill=fill, **attrs)

    def text(self, x, y, content, parent=None, **attrs):
        return self._add("text", parent=parent, text=content, x=x, y=y, **attrs)

    def line(self, x1, y1, x2, y2, stroke="#333333", parent=None, **attrs):
        return self._add("line", parent=parent, x1=x1, y1=y1, x2=x2, y2=y2, stroke=stroke, **attrs)

    def polyline(self, points, stroke, parent=None, **attrs):
        encoded = " ".join(f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in points)
        return self._add("polyline", parent=parent, points=encoded, stroke=stroke, fill="none", **attrs)

    def circle(self, cx, cy, r, fill, parent=None, **attrs):
        return self._add("circle", parent=parent, cx=cx, cy=cy, r=r, fill=fill, **attrs)

    def to_bytes(self):
        return etree.tostring(self.root, xml_declaration=True, encoding="UTF-8", pretty_print=True)

    def write(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())
        logger.debug(f"Wrote SVG {path}")
