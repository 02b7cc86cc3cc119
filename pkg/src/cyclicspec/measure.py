"""Counting measures, nested box grids over S = [-M, M]^2 and convergence diagnostics.

The limit measure is never materialized.  Every statement about it is made at a
fixed N through box masses on a jittered dyadic grid, compared against a
reference measure when one is known analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridConstructionError

# atoms closer than this to a cut are "on" the line and belong to no open box
ON_LINE_TOL = 1e-12
LINE_AVOID_TOL = 1e-9
DEFAULT_ETA = 0.0137

Rect = tuple[float, float, float, float]  # (x_lo, x_hi, y_lo, y_hi)


def _as_points(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=np.complex128))


def in_rect(points, rect: Rect, closed: bool = False) -> np.ndarray:
    """Boolean mask of the points lying in an open (or closed) rectangle."""
    z = _as_points(points)
    x, y = z.real, z.imag
    x_lo, x_hi, y_lo, y_hi = rect
    if closed:
        return (x >= x_lo) & (x <= x_hi) & (y >= y_lo) & (y <= y_hi)
    return (x > x_lo) & (x < x_hi) & (y > y_lo) & (y < y_hi)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite sum of point masses.

    ``points`` may be complex (measures on S) or real (pushforwards onto the
    phase interval); ``masses`` are nonnegative.
    """

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).ravel()
        points = np.asarray(self.points).ravel()
        if points.shape != masses.shape:
            raise ValueError("points and masses must have equal length")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "points", points)

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))

    def __len__(self) -> int:
        return len(self.masses)

    def box_mass(self, rect: Rect, closed: bool = False) -> float:
        return float(np.sum(self.masses[in_rect(self.points, rect, closed)]))

    def mass_where(self, mask_fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.masses[np.asarray(mask_fn(self.points), dtype=bool)]))

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points, self.masses

    def integrate(self, g: Callable) -> complex:
        vals = np.broadcast_to(g(self.points), self.points.shape)
        return complex(np.sum(vals * self.masses))

    def scaled(self, q: complex) -> "AtomicMeasure":
        return AtomicMeasure(q * self.points, self.masses)


@dataclass(frozen=True)
class UniformCircleMeasure:
    """Normalized arc-length measure on the circle |z| = radius."""

    radius: float = 1.0
    quadrature_nodes: int = 4096

    @property
    def total(self) -> float:
        return 1.0

    def _breakpoints(self, rect: Rect) -> np.ndarray:
        R = self.radius
        angles = [0.0, 2 * math.pi]
        for c in (rect[0], rect[1]):
            if abs(c) <= R:
                a = math.acos(c / R)
                angles += [a, -a]
        for c in (rect[2], rect[3]):
            if abs(c) <= R:
                a = math.asin(c / R)
                angles += [a, math.pi - a]
        return np.unique(np.mod(angles[2:], 2 * math.pi).tolist() + angles[:2])

    def box_mass(self, rect: Rect, closed: bool = False) -> float:
        bps = self._breakpoints(rect)
        lo, hi = bps[:-1], bps[1:]
        mid = 0.5 * (lo + hi)
        inside = in_rect(self.radius * np.exp(1j * mid), rect, closed=True)
        return float(np.sum((hi - lo)[inside]) / (2 * math.pi))

    def grid_masses(self, cuts: np.ndarray) -> np.ndarray:
        """Arc mass of every open box of the grid with the given cuts, indexed [i, j].

        The circle is split at its crossings with every cut line; each piece
        then lies in a single box (or on a line, where it carries no length).
        """
        R = self.radius
        c = np.asarray(cuts, dtype=float)
        c = c[np.abs(c) <= R]
        ax = np.arccos(c / R)
        ay = np.arcsin(c / R)
        bps = np.unique(np.mod(np.concatenate([[0.0], ax, -ax, ay, math.pi - ay]), 2 * math.pi))
        bps = np.append(bps, bps[0] + 2 * math.pi)
        mid = R * np.exp(1j * 0.5 * (bps[:-1] + bps[1:]))
        length = np.diff(bps) / (2 * math.pi)
        K = len(cuts) - 1
        i = np.searchsorted(cuts, mid.real, side="right") - 1
        j = np.searchsorted(cuts, mid.imag, side="right") - 1
        ok = (i >= 0) & (i < K) & (j >= 0) & (j < K)
        out = np.zeros((K, K))
        np.add.at(out, (i[ok], j[ok]), length[ok])
        return out

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.quadrature_nodes
        nodes = self.radius * np.exp(2j * np.pi * np.arange(n) / n)
        return nodes, np.full(n, 1.0 / n)

    def integrate(self, g: Callable) -> complex:
        # trapezoid rule: exact for trigonometric polynomials of degree < n
        nodes, w = self.nodes_weights()
        return complex(np.sum(np.broadcast_to(g(nodes), nodes.shape) * w))

    def scaled(self, q: complex) -> "UniformCircleMeasure":
        return UniformCircleMeasure(self.radius * abs(q), self.quadrature_nodes)


def counting_measure(sd) -> AtomicMeasure:
    """Weighted eigenvalue counting measure: atoms lambda_N(n) with masses xi_N(n)^2."""
    return AtomicMeasure(np.asarray(sd.lam, dtype=np.complex128), np.asarray(sd.xi) ** 2)


def sector_masses(am: AtomicMeasure, n_sectors: int, snap: float = 1e-12) -> np.ndarray:
    """Mass of the half-open angular sectors [2 pi k / n, 2 pi (k+1) / n)."""
    ang = np.mod(np.angle(am.points), 2 * np.pi)
    ang[ang > 2 * np.pi - snap] = 0.0
    idx = np.minimum((ang / (2 * np.pi / n_sectors)).astype(int), n_sectors - 1)
    out = np.zeros(n_sectors)
    np.add.at(out, idx, am.masses)
    return out


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxGrid:
    """Cuts r_0 = -M < r_1 < ... < r_K = M shared by both axes, K = 2^(level+2).

    Interior cuts sit at ``-M + k * step + shift``; the absolute shift is kept
    when refining so that every coarse cut is also a fine cut.
    """

    M: float
    level: int
    cuts: np.ndarray
    shift: float
    eta: float

    @property
    def x_cuts(self) -> np.ndarray:
        return self.cuts

    @property
    def y_cuts(self) -> np.ndarray:
        return self.cuts

    @property
    def n_boxes(self) -> int:
        return len(self.cuts) - 1

    @property
    def step(self) -> float:
        return 2 * self.M / self.n_boxes

    @property
    def min_gap(self) -> float:
        return float(np.min(np.diff(self.cuts)))

    def rect(self, i: int, j: int) -> Rect:
        c = self.cuts
        return (float(c[i]), float(c[i + 1]), float(c[j]), float(c[j + 1]))

    def diameter(self, i: int, j: int) -> float:
        x0, x1, y0, y1 = self.rect(i, j)
        return math.hypot(x1 - x0, y1 - y0)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Box indices (i, j) of each point and a mask of points on a cut line.

        Points on a line (or outside S) get index -1.
        """
        z = _as_points(points)
        out = []
        on = np.zeros(z.shape, dtype=bool)
        for coord in (z.real, z.imag):
            k = np.searchsorted(self.cuts, coord, side="right") - 1
            lo = np.abs(coord - self.cuts[np.clip(k, 0, self.n_boxes)])
            hi = np.abs(coord - self.cuts[np.clip(k + 1, 0, self.n_boxes)])
            bad = (k < 0) | (k >= self.n_boxes) | (lo <= ON_LINE_TOL) | (hi <= ON_LINE_TOL)
            on |= bad
            out.append(k)
        i, j = out
        i = np.where(on, -1, i)
        j = np.where(on, -1, j)
        return i, j, on

    def box_of(self, point: complex) -> tuple[int, int]:
        i, j, on = self.locate([point])
        if on[0]:
            raise ValueError(f"point {point} lies on a cut line of the level-{self.level} grid")
        return int(i[0]), int(j[0])

    def strip_mask(self, points, eps: float) -> np.ndarray:
        """Points inside R_eps, the eps-neighbourhood of the union of cut lines."""
        z = _as_points(points)
        dx = np.min(np.abs(z.real[:, None] - self.cuts[None, :]), axis=1)
        dy = np.min(np.abs(z.imag[:, None] - self.cuts[None, :]), axis=1)
        d = np.minimum(dx, dy)
        return (d < eps) | (d <= ON_LINE_TOL)


def _dyadic_cuts(M: float, level: int, shift: float) -> np.ndarray:
    K = 2 ** (level + 2)
    step = 2 * M / K
    cuts = -M + step * np.arange(K + 1) + shift
    cuts[0], cuts[-1] = -M, M
    return cuts


def _hits(cuts: np.ndarray, lines: np.ndarray) -> np.ndarray:
    if lines.size == 0:
        return lines
    # the outer edges +-M never carry atoms
    d = np.min(np.abs(lines[:, None] - cuts[None, 1:-1]), axis=1)
    return lines[d < LINE_AVOID_TOL]


def build_grid(M: float, level: int, atom_lines: Sequence[float] = (), eta: float = DEFAULT_ETA,
               max_retries: int = 50) -> BoxGrid:
    """Jittered dyadic grid of the given level avoiding the supplied atomic lines."""
    if level < 0:
        raise ValueError("level must be >= 0")
    lines = np.asarray(list(atom_lines), dtype=float)
    step = 2 * M / 2 ** (level + 2)
    for _ in range(max_retries + 1):
        cuts = _dyadic_cuts(M, level, eta * step)
        offending = _hits(cuts, lines)
        if offending.size == 0:
            return BoxGrid(float(M), level, cuts, eta * step, eta)
        eta = eta / 2 + 0.001
    raise GridConstructionError(f"cut lines keep hitting atomic lines {sorted(set(offending.tolist()))}")


def refine(grid: BoxGrid, atom_lines: Sequence[float] = ()) -> BoxGrid:
    """Next level with the same absolute shift, so all old cuts survive."""
    level = grid.level + 1
    cuts = _dyadic_cuts(grid.M, level, grid.shift)
    if grid.shift >= 2 * grid.M / 2 ** (level + 2):
        raise GridConstructionError("shift exceeds the refined step; rebuild from a finer level")
    offending = _hits(cuts, np.asarray(list(atom_lines), dtype=float))
    if offending.size:
        raise GridConstructionError(f"refined cuts hit atomic lines {sorted(offending.tolist())}")
    return BoxGrid(grid.M, level, cuts, grid.shift, grid.eta)


def coarsen(grid: BoxGrid, level: int) -> BoxGrid:
    stride = 2 ** (grid.level - level)
    return BoxGrid(grid.M, level, grid.cuts[::stride].copy(), grid.shift, grid.eta)


def grid_family(M: float, max_level: int, atom_lines: Sequence[float] = (),
                eta: float = DEFAULT_ETA) -> list[BoxGrid]:
    """Nested grids for levels 0..max_level, built at the finest level and coarsened.

    Every coarse cut is a fine cut, so line avoidance at the finest level covers
    the whole family.
    """
    finest = build_grid(M, max_level, atom_lines, eta)
    return [coarsen(finest, lv) for lv in range(max_level + 1)]


# ---------------------------------------------------------------------------
# box masses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxMasses:
    """Per-box mass of an atomic measure.

    ``mass[i, j]`` is the mass of the open box (x-index i, y-index j).
    ``boundary_mass`` is the mass lying on cut lines, so that
    ``mass.sum() + boundary_mass`` is the total.  ``strip_mass`` is the mass
    within ``eps`` of the cut lines (the R_eps strip mass).
    """

    grid: BoxGrid
    mass: np.ndarray
    boundary_mass: float
    strip_mass: float
    eps: float

    @property
    def total(self) -> float:
        return float(self.mass.sum() + self.boundary_mass)

    def csv_rows(self):
        g = self.grid
        for i in range(g.n_boxes):
            for j in range(g.n_boxes):
                x0, x1, y0, y1 = g.rect(i, j)
                yield (g.level, i, j, x0, x1, y0, y1, float(self.mass[i, j]))


BOXMASS_HEADER = ("level", "i", "j", "x_lo", "x_hi", "y_lo", "y_hi", "mass")


def box_masses(am: AtomicMeasure, grid: BoxGrid, eps: float = 0.0) -> BoxMasses:
    if eps < 0 or eps >= grid.min_gap / 2:
        raise ValueError("eps must lie in [0, min_gap / 2)")
    K = grid.n_boxes
    mass = np.zeros((K, K))
    if len(am) == 0:
        return BoxMasses(grid, mass, 0.0, 0.0, eps)
    i, j, on = grid.locate(am.points)
    np.add.at(mass, (i[~on], j[~on]), am.masses[~on])
    strip = grid.strip_mask(am.points, eps)
    return BoxMasses(grid, mass, float(am.masses[on].sum()), float(am.masses[strip].sum()), eps)


def reference_box_masses(reference, grid: BoxGrid) -> np.ndarray:
    """Box masses of any measure exposing ``box_mass(rect)``."""
    if isinstance(reference, AtomicMeasure):
        return box_masses(reference, grid).mass
    if hasattr(reference, "grid_masses"):
        return reference.grid_masses(grid.cuts)
    K = grid.n_boxes
    out = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            out[i, j] = reference.box_mass(grid.rect(i, j))
    return out


def measure_discrepancy(bm: BoxMasses, reference) -> float:
    """Max over boxes of |mass - reference mass|."""
    if isinstance(reference, BoxMasses):
        if not np.array_equal(reference.grid.cuts, bm.grid.cuts):
            raise ValueError("box masses live on different grids")
        ref = reference.mass
    elif isinstance(reference, (list, tuple)):
        pts, ms = zip(*reference) if reference else ((), ())
        ref = box_masses(AtomicMeasure(np.array(pts, dtype=complex), np.array(ms, dtype=float)),
                         bm.grid).mass
    else:
        ref = reference_box_masses(reference, bm.grid)
    return float(np.max(np.abs(bm.mass - ref)))


# ---------------------------------------------------------------------------
# atomic lines and spectrum estimates
# ---------------------------------------------------------------------------


def _heavy_lines(coords: Sequence[np.ndarray], masses: Sequence[np.ndarray], delta: float,
                 width: float) -> list[float]:
    candidates = np.unique(np.round(coords[-1], 12))
    lines = []
    for r in candidates:
        if all(float(m[np.abs(c - r) < width].sum()) > delta for c, m in zip(coords, masses)):
            lines.append(float(r) + 0.0)  # no negative zero
    return lines


def detect_atomic_lines(measures: Sequence[AtomicMeasure], delta: float,
                        width: float = 1e-9) -> tuple[list[float], list[float]]:
    """Coordinates whose thin strip carries mass > delta in every supplied measure.

    Returns ``(x_lines, y_lines)``: vertical lines Re = r and horizontal lines Im = r.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    measures = [m for m in measures if len(m)]
    if not measures:
        return [], []
    masses = [m.masses for m in measures]
    xs = _heavy_lines([np.asarray(m.points).real for m in measures], masses, delta, width)
    ys = _heavy_lines([np.asarray(m.points).imag for m in measures], masses, delta, width)
    return xs, ys


@dataclass(frozen=True)
class SpectrumEstimate:
    """Boxes carrying at least ``floor`` mass at the largest N."""

    grid: BoxGrid
    boxes: list[tuple[int, int]]
    stable: list[bool] = field(default_factory=list)

    def rects(self) -> list[Rect]:
        return [self.grid.rect(i, j) for i, j in self.boxes]

    def contains(self, points, fatten: float = 0.0) -> np.ndarray:
        """Mask of points in the closure of the boxes, optionally fattened by ``fatten``."""
        z = _as_points(points)
        out = np.zeros(z.shape, dtype=bool)
        for x0, x1, y0, y1 in self.rects():
            out |= in_rect(z, (x0 - fatten, x1 + fatten, y0 - fatten, y1 + fatten), closed=True)
        return out


def estimate_spectrum(bm_sequence: Sequence[BoxMasses], floor: float) -> SpectrumEstimate:
    if not bm_sequence:
        raise ValueError("need at least one BoxMasses")
    grid = bm_sequence[-1].grid
    for bm in bm_sequence:
        if not np.array_equal(bm.grid.cuts, grid.cuts):
            raise ValueError("all box masses must share one grid")
    last = bm_sequence[-1].mass
    idx = np.argwhere(last >= floor)
    boxes = [(int(i), int(j)) for i, j in idx]
    stable = [all(bm.mass[i, j] >= floor for bm in bm_sequence) for i, j in boxes]
    return SpectrumEstimate(grid, boxes, stable)


def max_usable_level(am: AtomicMeasure, grids: Sequence[BoxGrid], points: Sequence[complex]) -> int:
    """Largest level such that, at it and every coarser level, each box holding
    one of ``points`` carries positive counting mass.  Returns -1 if none."""
    best = -1
    for g in sorted(grids, key=lambda g: g.level):
        bm = box_masses(am, g)
        try:
            ok = all(bm.mass[g.box_of(p)] > 0 for p in points)
        except ValueError:
            ok = False
        if not ok:
            break
        best = g.level
    return best
