"""Explanations read directly off a decomposition.

Because the network is affine within each region, classic attribution
questions have closed-form answers there: SHAP values of a linear model
reduce to ``alpha * (x - mu)`` element-wise, a region's spatial footprint is
its bounding box (summarised as the smallest enclosing hypercube), and 2-D
partitions can be drawn exactly.  A brute-force Shapley enumeration over all
2^n feature coalitions is included as an oracle for the closed form.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .decomposition import Decomposition
from .errors import DimensionMismatchError, PointNotLocatedError, UnwrapError
from .lp import Extremum, LinearProgram, extremize

_EPS_FACE = 1e-12  # margin below which a point counts as on a face

_SHAP_DIM_CAP = 20  # brute force enumerates 2^n coalitions


@dataclass(frozen=True)
class ShapResult:
    """Per-feature attribution matrix phi[i, j] for feature i, output j."""

    phi: np.ndarray
    region: int
    mu: np.ndarray
    approximate: bool

    def to_jsonable(self) -> dict:
        return {
            "phi": self.phi.tolist(),
            "region": self.region,
            "mu": self.mu.tolist(),
            "approximate": self.approximate,
        }


@dataclass(frozen=True)
class HypercubeSummary:
    """Smallest axis-aligned cube enclosing a region's bounding box.

    ``side`` is the largest bounded extent (infinite when no coordinate is
    bounded).  Coordinates unbounded in either direction are listed in
    ``unbounded_dims``; their center entry falls back to the region witness.
    """

    center: np.ndarray
    side: float
    unbounded_dims: tuple[int, ...]


def _margins(d: Decomposition, x: np.ndarray) -> np.ndarray:
    """Signed distance of x to every half-space: positive means satisfied."""
    if d.num_halfspaces == 0:
        return np.zeros(0)
    H = np.array([hs.normal for hs in d.halfspaces])
    c = np.array([hs.offset for hs in d.halfspaces])
    return H @ x - c


def _contains(region, margins: np.ndarray, eps: float) -> bool:
    for i in region.halfspace_ids:
        if margins[i] < -eps:
            return False
        if margins[i] <= eps and i not in region.nonstrict_ids:
            return False
    return True


def region_contains(
    d: Decomposition, region: int, x, *, eps: float = _EPS_FACE
) -> bool:
    """Membership test honouring face ownership.

    A point belongs to a region when every bounding condition holds
    strictly, or lies (within ``eps``) on faces the region owns.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return _contains(d.regions[region], _margins(d, x), eps)


def locate_region(d: Decomposition, x, *, eps: float = _EPS_FACE) -> int:
    """Index of the region containing x.

    Strict containment wins; points on a face resolve to the region owning
    it.  If nothing matches (a numerically ambiguous boundary point), raises
    :class:`PointNotLocatedError` carrying the nearest region by violation.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != d.input_dim:
        raise DimensionMismatchError(
            f"point has {x.shape[0]} coordinates, decomposition has {d.input_dim}"
        )
    margins = _margins(d, x)
    best, best_slack = None, -np.inf
    for r, region in enumerate(d.regions):
        slack = (
            float(margins[list(region.halfspace_ids)].min())
            if region.halfspace_ids
            else np.inf
        )
        if slack > eps:
            return r
        if slack > best_slack:
            best, best_slack = r, slack
    for r, region in enumerate(d.regions):
        if _contains(region, margins, eps):
            return r
    raise PointNotLocatedError(
        f"point lies on an unowned boundary (worst margin {best_slack:.3e}); "
        f"nearest region is {best}",
        nearest_region=best,
    )


def exact_shap(
    d: Decomposition, x, background, *, eps: float = _EPS_FACE
) -> ShapResult:
    """Closed-form SHAP values of the model hosting x.

    The background mean is taken over the background points lying in the
    same region; if none do, the full-background mean is used and the result
    is flagged approximate.  phi[i, j] = alpha[j, i] * (x[i] - mu[i]).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if bg.size == 0:
        raise ValueError("background must contain at least one point")
    if bg.shape[1] != d.input_dim:
        raise DimensionMismatchError(
            f"background points have {bg.shape[1]} coordinates, "
            f"decomposition has {d.input_dim}"
        )
    r = locate_region(d, x, eps=eps)
    region = d.regions[r]
    inside = [q for q in bg if _contains(region, _margins(d, q), eps)]
    approximate = not inside
    mu = np.mean(inside if inside else bg, axis=0)
    phi = region.alpha.T * (x - mu)[:, None]
    return ShapResult(phi, r, mu, approximate)


def brute_force_shap(f, x, baseline) -> np.ndarray:
    """Shapley values by exhaustive coalition enumeration.

    Masked coordinates are replaced by the baseline.  For each feature i the
    sum runs over all coalitions z containing i, weighting the marginal
    contribution f(z) - f(z minus i) by s!(n-s-1)!/n! where s is the
    coalition size without i.  Exact but exponential; n is capped at 20.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    baseline = np.asarray(baseline, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if baseline.shape[0] != n:
        raise DimensionMismatchError("baseline and point lengths differ")
    if n > _SHAP_DIM_CAP:
        raise ValueError(f"brute force supports at most {_SHAP_DIM_CAP} features")

    outputs = []
    for mask in range(2**n):
        hybrid = np.where(
            [(mask >> i) & 1 for i in range(n)], x, baseline
        )
        outputs.append(np.atleast_1d(np.asarray(f(hybrid), dtype=np.float64)))
    F = np.array(outputs)

    fact = [math.factorial(v) for v in range(n + 1)]
    phi = np.zeros((n, F.shape[1]))
    for i in range(n):
        for mask in range(2**n):
            if not (mask >> i) & 1:
                continue
            s = bin(mask).count("1") - 1
            weight = fact[s] * fact[n - s - 1] / fact[n]
            phi[i] += weight * (F[mask] - F[mask & ~(1 << i)])
    return phi


def hypercube(d: Decomposition, region: int) -> HypercubeSummary:
    """Smallest enclosing hypercube of a region's closed polytope.

    Each coordinate is pushed to both extremes by LP over the region's
    bounding conditions; directions without a finite extreme are reported in
    ``unbounded_dims`` instead of clipped.
    """
    if not 0 <= region < d.num_regions:
        raise IndexError(f"region {region} out of range")
    reg = d.regions[region]
    n = d.input_dim
    ids = list(reg.halfspace_ids)
    if ids:
        A = np.array([-d.halfspaces[i].normal for i in ids])
        b = np.array([-d.halfspaces[i].offset for i in ids])
    else:
        A, b = np.zeros((0, n)), np.zeros(0)
    lp = LinearProgram(A, b, np.zeros(len(ids), dtype=bool))

    center = np.array(reg.witness, dtype=np.float64)
    extents = []
    unbounded = []
    for i in range(n):
        direction = np.zeros(n)
        direction[i] = 1.0
        hi = extremize(direction, lp)
        lo = extremize(-direction, lp)
        if Extremum.INFEASIBLE in (hi.status, lo.status):
            raise UnwrapError(f"region {region} solved as empty while boxed")
        if hi.status is Extremum.UNBOUNDED or lo.status is Extremum.UNBOUNDED:
            unbounded.append(i)
            continue
        top, bottom = float(hi.value), -float(lo.value)
        center[i] = (top + bottom) / 2.0
        extents.append(top - bottom)
    side = max(extents) if extents else np.inf
    return HypercubeSummary(center, float(side), tuple(unbounded))


# ---------------------------------------------------------------------------
# 2-D SVG plot

_SVG_SIZE = 640.0
_SVG_MARGIN = 40.0


def _clip_line(normal, offset, bounds):
    """Endpoints of the line normal . x = offset inside the rectangle."""
    x0, y0, x1, y1 = bounds
    a, b = float(normal[0]), float(normal[1])
    pts = []
    if abs(b) > 1e-15:
        for xe in (x0, x1):
            ye = (offset - a * xe) / b
            if y0 - 1e-9 <= ye <= y1 + 1e-9:
                pts.append((xe, ye))
    if abs(a) > 1e-15:
        for ye in (y0, y1):
            xe = (offset - b * ye) / a
            if x0 - 1e-9 <= xe <= x1 + 1e-9:
                pts.append((xe, ye))
    unique = []
    for pt in pts:
        if all(abs(pt[0] - q[0]) > 1e-9 or abs(pt[1] - q[1]) > 1e-9 for q in unique):
            unique.append(pt)
    if len(unique) < 2:
        return None
    unique.sort()
    return unique[0], unique[-1]


def plot_regions_2d(d: Decomposition, points, bounds, out, labels=None):
    """Write an SVG of a 2-D decomposition.

    Draws every boundary line (green) clipped to ``bounds`` =
    (x0, y0, x1, y1), the given points as crosses with optional labels, and
    for each bounded region containing at least one point its enclosing
    hypercube as a red square.  Only 2-input decompositions can be drawn.
    """
    if d.input_dim != 2:
        raise DimensionMismatchError(
            f"plot needs a 2-input decomposition, got {d.input_dim} inputs"
        )
    x0, y0, x1, y1 = (float(v) for v in bounds)
    if not (x0 < x1 and y0 < y1):
        raise ValueError("bounds must satisfy x0 < x1 and y0 < y1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2) if len(points) else np.zeros((0, 2))
    if labels is not None and len(labels) != len(pts):
        raise DimensionMismatchError("one label per point required")

    span = max(x1 - x0, y1 - y0)
    scale = (_SVG_SIZE - 2 * _SVG_MARGIN) / span

    def to_px(x, y):
        return (
            _SVG_MARGIN + (x - x0) * scale,
            _SVG_SIZE - _SVG_MARGIN - (y - y0) * scale,
        )

    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "version": "1.1",
            "width": f"{_SVG_SIZE:g}",
            "height": f"{_SVG_SIZE:g}",
            "viewBox": f"0 0 {_SVG_SIZE:g} {_SVG_SIZE:g}",
        },
    )
    fx0, fy1 = to_px(x0, y0)
    fx1, fy0 = to_px(x1, y1)
    ET.SubElement(
        svg,
        "rect",
        {
            "x": f"{fx0:.2f}",
            "y": f"{fy0:.2f}",
            "width": f"{fx1 - fx0:.2f}",
            "height": f"{fy1 - fy0:.2f}",
            "fill": "white",
            "stroke": "#333333",
            "stroke-width": "1",
        },
    )

    # each hyperplane once, whichever orientations reference it
    seen = set()
    for hs in d.halfspaces:
        h = np.round(hs.normal, 9)
        c = round(hs.offset, 9)
        if h[0] < 0 or (h[0] == 0 and h[1] < 0):
            h, c = -h, -c
        key = (h[0], h[1], c)
        if key in seen:
            continue
        seen.add(key)
        seg = _clip_line(hs.normal, hs.offset, (x0, y0, x1, y1))
        if seg is None:
            continue
        (ax, ay), (bx, by) = (to_px(*seg[0]), to_px(*seg[1]))
        ET.SubElement(
            svg,
            "line",
            {
                "x1": f"{ax:.2f}",
                "y1": f"{ay:.2f}",
                "x2": f"{bx:.2f}",
                "y2": f"{by:.2f}",
                "stroke": "#2e8b57",
                "stroke-width": "1.5",
            },
        )

    # red squares for bounded regions hosting points
    hosts = set()
    for pt in pts:
        try:
            hosts.add(locate_region(d, pt))
        except PointNotLocatedError:
            continue
    for r in sorted(hosts):
        cube = hypercube(d, r)
        if cube.unbounded_dims or not np.isfinite(cube.side):
            continue
        half = cube.side / 2.0
        cx0, cy0 = max(cube.center[0] - half, x0), max(cube.center[1] - half, y0)
        cx1, cy1 = min(cube.center[0] + half, x1), min(cube.center[1] + half, y1)
        if cx0 >= cx1 or cy0 >= cy1:
            continue
        px, py = to_px(cx0, cy1)
        qx, qy = to_px(cx1, cy0)
        ET.SubElement(
            svg,
            "rect",
            {
                "x": f"{px:.2f}",
                "y": f"{py:.2f}",
                "width": f"{qx - px:.2f}",
                "height": f"{qy - py:.2f}",
                "fill": "none",
                "stroke": "#d62728",
                "stroke-width": "1.5",
            },
        )

    for idx, pt in enumerate(pts):
        px, py = to_px(pt[0], pt[1])
        for dx0, dy0, dx1, dy1 in ((-4, 0, 4, 0), (0, -4, 0, 4)):
            ET.SubElement(
                svg,
                "line",
                {
                    "x1": f"{px + dx0:.2f}",
                    "y1": f"{py + dy0:.2f}",
                    "x2": f"{px + dx1:.2f}",
                    "y2": f"{py + dy1:.2f}",
                    "stroke": "#222222",
                    "stroke-width": "1.5",
                },
            )
        if labels is not None:
            text = ET.SubElement(
                svg,
                "text",
                {
                    "x": f"{px + 5:.2f}",
                    "y": f"{py - 5:.2f}",
                    "font-size": "10",
                    "font-family": "sans-serif",
                    "fill": "#222222",
                },
            )
            text.text = str(labels[idx])

    ET.ElementTree(svg).write(out, encoding="utf-8", xml_declaration=True)
