"""Generalized distributions, theta-good grid schedules and their coefficient vectors.

Distributions are antilinear functionals on continuous functions over S and the
pairing is conjugate-linear in its first slot, so that theta(f) is approximated
by <F_N(f) | u_N(theta)>.  In particular the Dirac functional at alpha
evaluates to conj(f(alpha)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .compression import SpectralData
from .embedding import HNVector, embed_function, norm0, norm_inf, region_mask
from .errors import InsufficientNError
from .measure import (
    AtomicMeasure,
    BoxGrid,
    box_masses,
    counting_measure,
    in_rect,
    reference_box_masses,
)


ROUNDOFF = 1e-12


def _values(f: Callable, z: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(f(z), dtype=np.complex128), z.shape)


class GeneralizedDistribution:
    """Bounded antilinear functional exposed through evaluation and box data.

    Subclasses implement ``eval``, ``support`` (points the functional
    depends on), ``_weights`` (the weights of those points).
    """

    name = "distribution"

    def eval(self, f: Callable) -> complex:
        raise NotImplementedError

    def support(self) -> np.ndarray:
        raise NotImplementedError

    def _weights(self) -> np.ndarray:
        """Complex weight w_x so that theta(f) = sum_x conj(f(x)) w_x."""
        raise NotImplementedError

    @property
    def bound_K(self) -> float:
        return float(np.sum(np.abs(self._weights())))

    def box_coeff(self, rect) -> complex:
        """theta(B, 1) for the open box B."""
        return complex(np.sum(self._weights()[in_rect(self.support(), rect)]))

    def box_coefficients(self, grid: BoxGrid) -> np.ndarray:
        """theta(B, 1) for every open box of the grid, indexed [i, j]."""
        K = grid.n_boxes
        out = np.zeros((K, K), dtype=np.complex128)
        pts = self.support()
        if pts.size == 0:
            return out
        i, j, on = grid.locate(pts)
        np.add.at(out, (i[~on], j[~on]), self._weights()[~on])
        return out

    def region_bound(self, region) -> float:
        """Bound on |theta(f)| over functions supported in ``region`` with sup |f| <= 1."""
        pts = self.support()
        if pts.size == 0:
            return 0.0
        return float(np.sum(np.abs(self._weights())[region_mask(region, pts)]))

    def __add__(self, other: "GeneralizedDistribution") -> "GeneralizedDistribution":
        return LinearCombination([(1.0, self), (1.0, other)])

    def __mul__(self, c: complex) -> "GeneralizedDistribution":
        return LinearCombination([(c, self)])

    __rmul__ = __mul__


class Dirac(GeneralizedDistribution):
    """Evaluation at alpha: f -> conj(f(alpha))."""

    def __init__(self, alpha: complex):
        self.alpha = complex(alpha)
        self.name = f"dirac({self.alpha})"

    def eval(self, f: Callable) -> complex:
        return complex(np.conj(_values(f, np.array([self.alpha]))[0]))

    def support(self) -> np.ndarray:
        return np.array([self.alpha])

    def _weights(self) -> np.ndarray:
        return np.ones(1, dtype=np.complex128)

    @property
    def bound_K(self) -> float:
        return 1.0


def dirac(alpha: complex) -> Dirac:
    return Dirac(alpha)


class FunctionDistribution(GeneralizedDistribution):
    """theta_g(f) = integral of conj(f) g against a reference measure (via its nodes)."""

    def __init__(self, g: Callable, reference, name: str = "function"):
        nodes, w = reference.nodes_weights()
        self.nodes = np.asarray(nodes, dtype=np.complex128)
        self.gm = _values(g, self.nodes) * np.asarray(w, dtype=float)
        self.name = name

    def eval(self, f: Callable) -> complex:
        return complex(np.sum(np.conj(_values(f, self.nodes)) * self.gm))

    def support(self) -> np.ndarray:
        return self.nodes

    def _weights(self) -> np.ndarray:
        return self.gm


def from_function(g: Callable, reference, name: str = "function") -> FunctionDistribution:
    return FunctionDistribution(g, reference, name)


class LinearCombination(GeneralizedDistribution):
    """sum_k c_k theta_k (linear in the distributions, antilinear in f)."""

    def __init__(self, terms: Sequence[tuple[complex, GeneralizedDistribution]]):
        self.terms = [(complex(c), t) for c, t in terms]
        self.name = " + ".join(f"{c}*{t.name}" for c, t in self.terms)

    def eval(self, f: Callable) -> complex:
        return sum(c * t.eval(f) for c, t in self.terms)

    def support(self) -> np.ndarray:
        parts = [t.support() for _, t in self.terms]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.complex128)

    def _weights(self) -> np.ndarray:
        parts = [c * t._weights() for c, t in self.terms]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.complex128)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleEntry:
    N: int
    n: int
    eps: float
    delta_prime: float
    delta: float
    valid: bool


@dataclass(frozen=True)
class GoodPairSchedule:
    entries: list[ScheduleEntry]
    grids: list[BoxGrid] = field(repr=False)

    def entry(self, N: int) -> ScheduleEntry:
        for e in self.entries:
            if e.N == N:
                return e
        raise KeyError(N)

    def csv_rows(self):
        return [(e.N, e.n, e.eps, e.delta, int(e.valid)) for e in self.entries]


SCHEDULE_HEADER = ("N", "n", "eps", "delta", "valid")


def _try_level(thetas, am: AtomicMeasure, grid: BoxGrid, ref_mass: Optional[np.ndarray],
               max_halvings: int) -> Optional[tuple[float, float, float]]:
    bm = box_masses(am, grid)
    positive = bm.mass[bm.mass > 0]
    if positive.size == 0:
        return None
    delta_p = float(positive.min())
    delta = delta_p / 2 ** (3 * (grid.level + 2))
    if ref_mass is not None and float(np.max(np.abs(bm.mass - ref_mass))) >= delta:
        return None
    eps = grid.min_gap / 4
    for _ in range(max_halvings):
        strip = lambda z, e=eps: grid.strip_mask(z, e)  # noqa: E731
        if am.mass_where(strip) < delta and all(t.region_bound(strip) < delta for t in thetas):
            return eps, delta_p, delta
        eps /= 2
    return None


def good_pair_schedule(thetas, sd_sequence: Sequence[SpectralData], grids: Sequence[BoxGrid],
                       n_max: int, reference=None, max_halvings: int = 60) -> GoodPairSchedule:
    """Pick, for every N, the largest level n <= n_max admitting a theta-good eps.

    Clauses checked at (n, eps): (a) every distribution's bound on the strip
    R^n_eps is below delta; (b) the counting mass of the strip is below delta;
    (c) every box mass is within delta of the reference measure, which
    defaults to the counting measure of the largest N supplied.
    delta = delta' / 2^(3(n+2)) with delta' the smallest positive box mass.
    Levels never decrease along the valid entries; when no level works the
    entry is (n=0, invalid).
    """
    if isinstance(thetas, GeneralizedDistribution):
        thetas = [thetas]
    if reference is None and sd_sequence:
        reference = counting_measure(sd_sequence[-1])
    by_level = {g.level: g for g in grids}
    ref_cache: dict[int, np.ndarray] = {}
    entries = []
    floor = 1
    for sd in sd_sequence:
        am = counting_measure(sd)
        found = None
        for n in range(min(n_max, max(by_level, default=0)), floor - 1, -1):
            if n not in by_level:
                continue
            grid = by_level[n]
            ref = None
            if reference is not None:
                if n not in ref_cache:
                    ref_cache[n] = reference_box_masses(reference, grid)
                ref = ref_cache[n]
            hit = _try_level(thetas, am, grid, ref, max_halvings)
            if hit is not None:
                found = (n, *hit)
                break
        if found is None:
            entries.append(ScheduleEntry(sd.N, 0, 0.0, 0.0, 0.0, False))
        else:
            n, eps, dp, d = found
            floor = n
            entries.append(ScheduleEntry(sd.N, n, eps, dp, d, True))
    return GoodPairSchedule(entries, list(grids))


# ---------------------------------------------------------------------------
# coefficient vectors and pairing
# ---------------------------------------------------------------------------


def _usable_boxes(sd: SpectralData, grid: BoxGrid, reference):
    mu = box_masses(counting_measure(sd), grid).mass
    ref = mu if reference is None else reference_box_masses(reference, grid)
    return mu, ref


def theta_vector(theta: GeneralizedDistribution, sd: SpectralData, grid: BoxGrid,
                 reference=None) -> HNVector:
    """u_N(theta): a_k = xi_k theta(B, 1) / mu_N(B) for lambda_k in the open box B.

    Boxes without reference mass contribute nothing.  A box with reference
    mass, nonzero coefficient and no counting mass raises InsufficientNError.
    """
    mu, ref = _usable_boxes(sd, grid, reference)
    coeff = theta.box_coefficients(grid)
    starving = (ref > 0) & (mu <= 0) & (coeff != 0)
    if np.any(starving):
        i, j = np.argwhere(starving)[0]
        raise InsufficientNError(
            f"box {grid.rect(int(i), int(j))} has reference mass but no eigenvalue at N={sd.N}"
        )
    usable = (ref > 0) & (mu > 0)
    ratio = np.where(usable, coeff / np.where(usable, mu, 1.0), 0.0)
    i, j, on = grid.locate(sd.lam)
    a = np.zeros(sd.D_N, dtype=np.complex128)
    a[~on] = sd.xi[~on] * ratio[i[~on], j[~on]]
    return HNVector(a, sd)


def pairing(x: HNVector, y: HNVector, near_region=None):
    """<x|y> = sum conj(x_n) y_n with a near/far bound decomposition.

    Near eigenvalues (inside ``near_region``, default all of S) contribute at
    most norm_inf(x, near) * norm0(y restricted to near); far ones at most
    max_far |x_n| / xi_n * norm0(y restricted to far).
    """
    x._check(y)
    sd = x.sd
    value = complex(np.vdot(x.coeffs, y.coeffs))
    near = region_mask(near_region, sd.lam)
    far = ~near
    y_near = HNVector(np.where(near, y.coeffs, 0.0), sd)
    y_far = HNVector(np.where(far, y.coeffs, 0.0), sd)
    near_bound = norm_inf(x, region=near_region) * norm0(y_near) if near.any() else 0.0
    far_bound = 0.0
    if far.any():
        far_weight = norm_inf(x, region=lambda z: ~region_mask(near_region, z))
        far_bound = far_weight * norm0(y_far) if norm0(y_far) > 0 else 0.0
    report = {
        "near_value": complex(np.vdot(x.coeffs[near], y.coeffs[near])),
        "far_value": complex(np.vdot(x.coeffs[far], y.coeffs[far])),
        "near_bound": float(near_bound),
        "far_bound": float(far_bound),
    }
    return value, report


def representation_defect(theta: GeneralizedDistribution, f: Callable, sd: SpectralData,
                          grid: BoxGrid, reference=None) -> tuple[float, float]:
    """|<F_N(f) | u_N(theta)> - theta(f)| and a bound for it.

    Per box, theta((f - avg_B f) chi_B) is at most theta's box bound times the
    spread of f between theta's support points and the eigenvalues in B.  Mass
    of theta on cut lines or in skipped boxes adds its bound times sup |f|.
    A floating-point allowance of ROUNDOFF * K * sup |f| is included.
    """
    u = theta_vector(theta, sd, grid, reference)
    value, _ = pairing(embed_function(f, sd), u)
    defect = abs(value - theta.eval(f))

    mu, ref = _usable_boxes(sd, grid, reference)
    usable = (ref > 0) & (mu > 0)
    pts = theta.support()
    w = np.abs(theta._weights())
    budget = 0.0
    if pts.size:
        pi, pj, pon = grid.locate(pts)
        li, lj, lon = grid.locate(sd.lam)
        fabs = np.abs(_values(f, pts))
        budget += ROUNDOFF * max(1.0, float(np.sum(w * fabs)))
        budget += float(np.sum(w[pon] * fabs[pon]))
        for i, j in sorted({(int(a), int(b)) for a, b in zip(pi[~pon], pj[~pon])}):
            sel = (~pon) & (pi == i) & (pj == j)
            if not usable[i, j]:
                budget += float(np.sum(w[sel] * fabs[sel]))
                continue
            eig = sd.lam[(~lon) & (li == i) & (lj == j)]
            # a weighted sum bounded by the largest per-point spread
            fx = _values(f, pts[sel])
            fl = _values(f, eig)
            spread = np.max(np.abs(fx[:, None] - fl[None, :]), axis=1)
            budget += float(np.sum(w[sel] * spread))
    return float(defect), budget


def norm0_bound_check(theta: GeneralizedDistribution, sd: Optional[SpectralData],
                      grid: BoxGrid) -> tuple[float, float]:
    """(sum over boxes of |theta(B, 1)|, 16 * bound_K)."""
    return float(np.sum(np.abs(theta.box_coefficients(grid)))), 16.0 * theta.bound_K


def defect_rows(results):
    """CSV rows (N, defect, budget) from (N, (defect, budget)) pairs."""
    return [(N, d, b) for N, (d, b) in results]
