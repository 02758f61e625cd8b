"""Minimal dependency-free SVG emission for set projections and traces.

Figures are built from polylines in data coordinates; the writer flips
the y-axis and fits a viewBox with margins. Ellipse outlines are exact
parametric boundary points (x^T P x = 1 up to rounding), so the plot
data doubles as a verification artifact.
"""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def ellipse_outline(P2: np.ndarray, n_points: int = 256) -> np.ndarray:
    """Boundary points of {x : x^T P2 x = 1} for a 2x2 SPD matrix."""
    w, V = np.linalg.eigh(P2)
    A = V @ np.diag(w**-0.5) @ V.T  # symmetric inverse square root
    th = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=True)
    u = np.stack([np.cos(th), np.sin(th)], axis=0)
    return (A @ u).T


class SvgFigure:
    """Collects polylines/markers and renders one standalone SVG."""

    def __init__(self, title: str = "", width: int = 640, height: int = 640):
        self.title = title
        self.width = width
        self.height = height
        self._lines: list[tuple[np.ndarray, str, float, str]] = []
        self._texts: list[tuple[float, float, str, str]] = []

    def polyline(self, xy: np.ndarray, color: str = "#000000", width: float = 1.5,
                 dash: str = ""):
        xy = np.asarray(xy, dtype=float)
        if xy.size:
            self._lines.append((xy, color, width, dash))

    def text(self, x: float, y: float, s: str, color: str = "#000000"):
        self._texts.append((float(x), float(y), s, color))

    def _bounds(self):
        pts = [l[0] for l in self._lines]
        if not pts:
            return -1.0, 1.0, -1.0, 1.0
        allp = np.vstack(pts)
        x0, y0 = allp.min(axis=0)
        x1, y1 = allp.max(axis=0)
        dx = max(x1 - x0, 1e-9)
        dy = max(y1 - y0, 1e-9)
        return x0 - 0.05 * dx, x1 + 0.05 * dx, y0 - 0.05 * dy, y1 + 0.05 * dy

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        sx = self.width / (x1 - x0)
        sy = self.height / (y1 - y0)

        def tx(p):
            return (p[:, 0] - x0) * sx, (y1 - p[:, 1]) * sy

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f"<title>{self.title}</title>",
        ]
        for xy, color, lw, dash in self._lines:
            xs, ys = tx(xy)
            pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="{lw}"'
                f'{dash_attr} points="{pts}"/>'
            )
        for x, y, s, color in self._texts:
            px = (x - x0) * sx
            py = (y1 - y) * sy
            parts.append(f'<text x="{px:.1f}" y="{py:.1f}" fill="{color}" font-size="12">{s}</text>')
        parts.append("</svg>")
        return "\n".join(parts)
