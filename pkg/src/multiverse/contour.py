"""Dependency-free contour rendering: marching squares over a prediction
grid, emitted as an SVG document.

Axis positions use each dimension's unit-cube transform, so log-scaled
dimensions get log-scaled axes for free.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np

from .analysis import PredictionGrid
from .errors import ValidationError

N_LEVELS = 10
MARGIN = 60.0
PLOT = 480.0


def contour_levels(zmin: float, zmax: float, n: int = N_LEVELS) -> np.ndarray:
    """n evenly spaced interior iso-levels strictly inside [zmin, zmax]."""
    return np.linspace(zmin, zmax, n + 2)[1:-1]


def _interp(v0: float, v1: float, level: float) -> float:
    if v1 == v0:
        return 0.5
    return (level - v0) / (v1 - v0)


def marching_squares(Z: np.ndarray, level: float) -> list[list[tuple[float, float]]]:
    """Iso-line segments of Z at the given level, in (col, row) grid
    coordinates.  Returns a list of 2-point segments; rendering joins them
    visually, so no topological chaining is needed."""
    n_rows, n_cols = Z.shape
    segments = []
    for r in range(n_rows - 1):
        for c in range(n_cols - 1):
            # corner values, counterclockwise from bottom-left of the cell
            z00, z10 = Z[r, c], Z[r, c + 1]
            z01, z11 = Z[r + 1, c], Z[r + 1, c + 1]
            idx = (
                (z00 > level)
                | ((z10 > level) << 1)
                | ((z11 > level) << 2)
                | ((z01 > level) << 3)
            )
            if idx in (0, 15):
                continue
            # edge midpoints with linear interpolation
            bottom = (c + _interp(z00, z10, level), r)
            top = (c + _interp(z01, z11, level), r + 1)
            left = (c, r + _interp(z00, z01, level))
            right = (c + 1, r + _interp(z10, z11, level))
            lookup = {
                1: [(left, bottom)],
                2: [(bottom, right)],
                3: [(left, right)],
                4: [(top, right)],
                6: [(bottom, top)],
                7: [(left, top)],
                8: [(left, top)],
                9: [(bottom, top)],
                11: [(top, right)],
                12: [(left, right)],
                13: [(bottom, right)],
                14: [(left, bottom)],
            }
            if idx in (5, 10):
                center = (z00 + z10 + z01 + z11) / 4.0
                if (center > level) == (idx == 5):
                    pairs = [(left, bottom), (top, right)]
                else:
                    pairs = [(left, top), (bottom, right)]
            else:
                pairs = lookup[idx]
            segments.extend([list(pair) for pair in pairs])
    return segments


def _tick_positions(dim) -> list[tuple[float, str]]:
    """(unit position, label) pairs for an axis."""
    ticks = []
    if dim.kind == "continuous-log10":
        lo = math.ceil(math.log10(dim.lower) - 1e-9)
        hi = math.floor(math.log10(dim.upper) + 1e-9)
        for e in range(lo, hi + 1):
            ticks.append((dim.to_unit(10.0**e), f"1e{e}"))
    elif dim.kind == "integer-log2":
        lo = int(round(math.log2(dim.lower)))
        hi = int(round(math.log2(dim.upper)))
        step = max(1, (hi - lo) // 6)
        for e in range(lo, hi + 1, step):
            ticks.append((dim.to_unit(2**e), str(2**e)))
    else:
        for t in np.linspace(dim.lower, dim.upper, 5):
            ticks.append((dim.to_unit(float(t)), f"{t:g}"))
    return ticks


def render_contour_svg(
    grid: PredictionGrid,
    space,
    field: str = "mean",
    observations=None,
    title: str | None = None,
) -> str:
    """SVG contour plot of one grid field with observed points overlaid.

    Successful observations render as circles, failed/excluded ones as
    crosses.  One <path> element per iso-level present in the data range.
    """
    if field not in ("mean", "variance"):
        raise ValidationError("field must be 'mean' or 'variance'")
    Z = getattr(grid, field)
    x_dim = space.dimension(grid.x_name)
    y_dim = space.dimension(grid.y_name)
    n_rows, n_cols = Z.shape

    def sx(unit: float) -> float:
        return MARGIN + unit * PLOT

    def sy(unit: float) -> float:
        return MARGIN + (1.0 - unit) * PLOT

    def cell_to_screen(col: float, row: float) -> tuple[float, float]:
        # grid cells are evenly spaced in unit coordinates by construction
        ux = x_dim.to_unit(grid.x_values[0]) if n_cols == 1 else col / (n_cols - 1)
        uy = y_dim.to_unit(grid.y_values[0]) if n_rows == 1 else row / (n_rows - 1)
        return sx(ux), sy(uy)

    size = 2 * MARGIN + PLOT
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(size),
        height=str(size),
        viewBox=f"0 0 {size} {size}",
    )
    ET.SubElement(
        svg, "rect", x="0", y="0", width=str(size), height=str(size), fill="white"
    )
    if title:
        t = ET.SubElement(
            svg, "text", x=str(size / 2), y=str(MARGIN / 2),
            fill="black", style="font: 16px sans-serif", attrib={"text-anchor": "middle"},
        )
        t.text = title
    frame = ET.SubElement(
        svg, "rect", x=str(MARGIN), y=str(MARGIN), width=str(PLOT), height=str(PLOT),
        fill="none", stroke="black",
    )

    zmin, zmax = float(Z.min()), float(Z.max())
    if zmax > zmin:
        for i, level in enumerate(contour_levels(zmin, zmax)):
            segments = marching_squares(Z, level)
            if not segments:
                continue
            parts = []
            for seg in segments:
                (x0, y0), (x1, y1) = (cell_to_screen(*p) for p in seg)
                parts.append(f"M {x0:.2f} {y0:.2f} L {x1:.2f} {y1:.2f}")
            shade = 40 + int(170 * i / max(N_LEVELS - 1, 1))
            ET.SubElement(
                svg, "path", d=" ".join(parts), fill="none",
                stroke=f"rgb({shade},{shade},{shade})",
                attrib={"stroke-width": "1.2", "data-level": repr(float(level))},
            )

    # axis ticks
    for unit, label in _tick_positions(x_dim):
        x = sx(unit)
        ET.SubElement(svg, "line", x1=f"{x:.2f}", y1=str(MARGIN + PLOT),
                      x2=f"{x:.2f}", y2=str(MARGIN + PLOT + 6), stroke="black")
        t = ET.SubElement(svg, "text", x=f"{x:.2f}", y=str(MARGIN + PLOT + 20),
                          fill="black", style="font: 11px sans-serif",
                          attrib={"text-anchor": "middle"})
        t.text = label
    for unit, label in _tick_positions(y_dim):
        y = sy(unit)
        ET.SubElement(svg, "line", x1=str(MARGIN - 6), y1=f"{y:.2f}",
                      x2=str(MARGIN), y2=f"{y:.2f}", stroke="black")
        t = ET.SubElement(svg, "text", x=str(MARGIN - 9), y=f"{y + 4:.2f}",
                          fill="black", style="font: 11px sans-serif",
                          attrib={"text-anchor": "end"})
        t.text = label
    # axis names
    tx = ET.SubElement(svg, "text", x=str(MARGIN + PLOT / 2), y=str(size - 12),
                       fill="black", style="font: 13px sans-serif",
                       attrib={"text-anchor": "middle"})
    tx.text = grid.x_name
    ty = ET.SubElement(
        svg, "text", x="16", y=str(MARGIN + PLOT / 2),
        fill="black", style="font: 13px sans-serif",
        attrib={
            "text-anchor": "middle",
            "transform": f"rotate(-90 16 {MARGIN + PLOT / 2})",
        },
    )
    ty.text = grid.y_name

    # observation overlay: unit coords of the two free dimensions
    if observations is not None:
        ix = _numeric_index(space, grid.x_name)
        iy = _numeric_index(space, grid.y_name)
        for i in range(observations.n):
            x = sx(float(observations.U[i, ix]))
            y = sy(float(observations.U[i, iy]))
            if observations.status[i] == "ok":
                ET.SubElement(
                    svg, "circle", cx=f"{x:.2f}", cy=f"{y:.2f}", r="3.5",
                    fill="white", stroke="black",
                )
            else:
                d = 3.5
                ET.SubElement(
                    svg, "path",
                    d=f"M {x-d:.2f} {y-d:.2f} L {x+d:.2f} {y+d:.2f} "
                      f"M {x-d:.2f} {y+d:.2f} L {x+d:.2f} {y-d:.2f}",
                    stroke="black", fill="none",
                    attrib={"stroke-width": "1.5"},
                )

    return ET.tostring(svg, encoding="unicode")


def _numeric_index(space, name: str) -> int:
    return space.numeric_index(name)
