"""Kernel-induced operators on H_N, condition checks and kernel recovery by box averages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .compression import SpectralData
from .distributions import GeneralizedDistribution, pairing, theta_vector
from .embedding import HNVector, embed_function, norm_inf
from .errors import InsufficientNError
from .measure import BoxGrid, box_masses, counting_measure, reference_box_masses
from .models import Polynomial


@dataclass(frozen=True)
class KernelFunction:
    """Continuous kernel K(x, y) on S x S, vectorized over broadcastable arrays.

    ``sup_bound`` bounds |K| on the disc holding the spectrum; ``lipschitz``
    (optional) bounds |K(x, y) - K(x', y')| / (|x - x'| + |y - y'|) there.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    sup_bound: float
    name: str = "kernel"
    lipschitz: Optional[float] = None

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        y = np.asarray(y, dtype=np.complex128)
        return np.broadcast_to(np.asarray(self.evaluate(x, y), dtype=np.complex128),
                               np.broadcast_shapes(x.shape, y.shape))


def xy_conj_kernel(radius: float = 1.0) -> KernelFunction:
    return KernelFunction(lambda x, y: x * np.conj(y), radius**2, "xy_conj", radius)


def exp_re_kernel(radius: float = 1.0) -> KernelFunction:
    top = math.exp(radius**2)
    return KernelFunction(lambda x, y: np.exp(np.real(x * np.conj(y))), top, "exp_re", top * radius)


def constant_kernel(c: complex = 1.0) -> KernelFunction:
    return KernelFunction(lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), c,
                                               dtype=np.complex128),
                          abs(c), "constant", 0.0)


BUILTIN_KERNELS = {"xy_conj": xy_conj_kernel, "exp_re": exp_re_kernel, "constant": constant_kernel}


def builtin_kernel(name: str, radius: float = 1.0, value: complex = 1.0) -> KernelFunction:
    if name == "constant":
        return constant_kernel(value)
    if name not in BUILTIN_KERNELS:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(BUILTIN_KERNELS)}")
    return BUILTIN_KERNELS[name](radius)


@dataclass(frozen=True)
class ApproxOperator:
    """A D_N x D_N matrix acting on eigenbasis coefficients."""

    matrix: np.ndarray
    sd: SpectralData
    provenance: str = "user-supplied"
    kernel: Optional[KernelFunction] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (self.sd.D_N, self.sd.D_N):
            raise ValueError(f"matrix shape {m.shape} does not match D_N = {self.sd.D_N}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        object.__setattr__(self, "matrix", m)

    def __call__(self, v: HNVector) -> HNVector:
        return HNVector(self.matrix @ v.coeffs, self.sd)


def kernel_operator(K: KernelFunction, sd: SpectralData) -> ApproxOperator:
    """Entry (n, k) = xi_k xi_n K(lambda_k, lambda_n)."""
    lam = sd.lam
    mat = np.outer(sd.xi, sd.xi) * K(lam[None, :], lam[:, None])
    return ApproxOperator(mat, sd, "kernel-built", K)


def _grid_at(grids, p: int) -> BoxGrid:
    if isinstance(grids, BoxGrid):
        if grids.level != p:
            raise ValueError(f"grid has level {grids.level}, asked for {p}")
        return grids
    for g in grids:
        if g.level == p:
            return g
    raise ValueError(f"no grid of level {p}")


def _box_mask(alpha: complex, grid: BoxGrid, sd: SpectralData) -> np.ndarray:
    i, j = grid.box_of(alpha)
    li, lj, on = grid.locate(sd.lam)
    return (~on) & (li == i) & (lj == j)


def box_vector(alpha: complex, p: int, sd: SpectralData, grids) -> HNVector:
    """u^p_alpha: xi_k / mu_N(B) on the level-p box B containing alpha, zero elsewhere."""
    grid = _grid_at(grids, p)
    mask = _box_mask(alpha, grid, sd)
    # same arithmetic as theta_vector of a Dirac functional, so the two agree bitwise
    mu = box_masses(counting_measure(sd), grid).mass[grid.box_of(alpha)]
    if mu <= 0:
        raise InsufficientNError(f"the level-{p} box of {alpha} holds no eigenvalue at N={sd.N}")
    a = np.zeros(sd.D_N, dtype=np.complex128)
    a[mask] = sd.xi[mask] * (1.0 / mu)
    return HNVector(a, sd)


def propagator(B: ApproxOperator, alpha: complex, beta: complex, p: int, sd: SpectralData,
               grids) -> complex:
    """<u^p_beta | B u^p_alpha>."""
    ua = box_vector(alpha, p, sd, grids)
    ub = box_vector(beta, p, sd, grids)
    return complex(np.vdot(ub.coeffs, B.matrix @ ua.coeffs))


def _box_samples(grid: BoxGrid, point: complex, extra: np.ndarray, k: int = 5) -> np.ndarray:
    x0, x1, y0, y1 = grid.rect(*grid.box_of(point))
    xs, ys = np.linspace(x0, x1, k), np.linspace(y0, y1, k)
    lattice = (xs[:, None] + 1j * ys[None, :]).ravel()
    return np.concatenate([[point], lattice, extra])


def box_oscillation(K: KernelFunction, alpha: complex, beta: complex, grid: BoxGrid,
                    sd: SpectralData) -> float:
    """max |K(x, y) - K(alpha, beta)| over sampled x in the closed box of alpha and
    y in that of beta; the eigenvalues in the boxes are always sampled."""
    ea = sd.lam[_box_mask(alpha, grid, sd)]
    eb = sd.lam[_box_mask(beta, grid, sd)]
    xa = _box_samples(grid, alpha, ea)
    yb = _box_samples(grid, beta, eb)
    return float(np.max(np.abs(K(xa[:, None], yb[None, :]) - K(alpha, beta))))


@dataclass(frozen=True)
class KernelEstimate:
    """Propagator table over (p, N) cells and the value at the finest usable cell."""

    alpha: complex
    beta: complex
    rows: list[tuple[int, int, complex, float]]
    value: complex
    budget: float

    def csv_rows(self):
        a, b = self.alpha, self.beta
        return [(a.real, a.imag, b.real, b.imag, p, N, v.real, v.imag, bud)
                for p, N, v, bud in self.rows]


PROPAGATOR_HEADER = ("alpha_re", "alpha_im", "beta_re", "beta_im", "p", "N",
                     "value_re", "value_im", "budget")


def _usable(alpha: complex, beta: complex, grid: BoxGrid, sd: SpectralData) -> bool:
    try:
        return bool(_box_mask(alpha, grid, sd).any() and _box_mask(beta, grid, sd).any())
    except ValueError:
        return False


def kernel_estimate(operators: Sequence[ApproxOperator], alpha: complex, beta: complex,
                    levels: Sequence[int], grids: Sequence[BoxGrid],
                    kernel: Optional[KernelFunction] = None) -> KernelEstimate:
    """Propagators for every level in ``levels`` and every operator (one per N).

    Levels stop at the first one where a box of alpha or beta is empty.  The
    budget of a cell bounds |value - K(alpha, beta)| for kernel-built operators:
    their propagator is an average of K over eigenvalue pairs in the two boxes.
    """
    kernel = kernel if kernel is not None else (operators[-1].kernel if operators else None)
    rows = []
    for B in operators:
        sd = B.sd
        for p in sorted(levels):
            grid = _grid_at(grids, p)
            if not _usable(alpha, beta, grid, sd):
                break
            val = propagator(B, alpha, beta, p, sd, grid)
            bud = box_oscillation(kernel, alpha, beta, grid, sd) if kernel is not None else math.nan
            rows.append((p, sd.N, val, bud))
    if not rows:
        raise InsufficientNError(f"no usable level for ({alpha}, {beta})")
    best = max(rows, key=lambda r: (r[1], r[0]))
    return KernelEstimate(complex(alpha), complex(beta), rows, best[2], best[3])


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------


def _random_vectors(D: int, count: int, rng: np.random.Generator) -> np.ndarray:
    V = rng.normal(size=(D, count)) + 1j * rng.normal(size=(D, count))
    return V / np.linalg.norm(V, axis=0)


def check_C1(B: ApproxOperator, sd: Optional[SpectralData] = None, sample_count: int = 64,
             seed: int = 0, power_steps: int = 100) -> float:
    """Sampled operator norm: random unit vectors, then power iteration on B^H B."""
    mat = B.matrix
    D = mat.shape[0]
    if D == 0 or not np.any(mat):
        return 0.0
    rng = np.random.default_rng(seed)
    V = _random_vectors(D, sample_count, rng)
    norms = np.linalg.norm(mat @ V, axis=0)
    best = float(norms.max())
    v = V[:, int(np.argmax(norms))]
    for _ in range(power_steps):
        w = mat.conj().T @ (mat @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
        best = max(best, float(np.linalg.norm(mat @ v)))
    return best


def check_C1_inf(B: ApproxOperator, sd: Optional[SpectralData] = None, sample_count: int = 64,
                 seed: int = 0) -> float:
    """Largest sampled ||Bv||_inf / ||v||_inf over S, with v = F_N of random samples."""
    sd = B.sd if sd is None else sd
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(sample_count):
        vals = rng.normal(size=sd.D_N) + 1j * rng.normal(size=sd.D_N)
        v = HNVector(sd.xi * vals, sd)
        den = norm_inf(v)
        if den > 0:
            best = max(best, norm_inf(B(v)) / den)
    return best


def _reference_nodes(reference, sd: SpectralData):
    if reference is None:
        reference = counting_measure(sd)
    nodes, w = reference.nodes_weights()
    return np.asarray(nodes, dtype=np.complex128), np.asarray(w, dtype=float)


def check_C2(B: ApproxOperator, K: KernelFunction, sd: SpectralData, reference,
             polys: Sequence[Polynomial]) -> float:
    """max over P of ||B F_N(f_P) - F_N(B_D f_P)||_2 with
    B_D f(y) = integral of K(x, y) f(x) against the reference measure."""
    nodes, w = _reference_nodes(reference, sd)
    kmat = K(nodes[None, :], sd.lam[:, None])
    worst = 0.0
    for P in polys:
        lhs = B(embed_function(P, sd)).coeffs
        bd = kmat @ (np.asarray(P(nodes), dtype=np.complex128) * w)
        worst = max(worst, float(np.linalg.norm(lhs - sd.xi * bd)))
    return worst


def check_C2prime_C3prime(B: ApproxOperator, sd: SpectralData, grid: BoxGrid,
                          kernel: Optional[KernelFunction] = None, reference=None,
                          p_grids: Sequence[BoxGrid] = ()) -> tuple[float, float]:
    """(c2p, c3p) on the boxes of ``grid`` (and of ``p_grids`` for c3p).

    c2p compares B F_N(chi*_B) with F_N(B_D chi*_B) in the sup norm over S,
    where chi*_B is the indicator of B divided by its reference mass; c3p is
    the largest ||B u^p_box||_inf over nonempty boxes.
    """
    kernel = kernel if kernel is not None else B.kernel
    am = counting_measure(sd)
    nodes, w = _reference_nodes(reference, sd)
    c2p = 0.0 if kernel is not None else math.nan
    c3p = 0.0
    for g in [grid, *p_grids]:
        mu = box_masses(am, g).mass
        ref = mu if reference is None else reference_box_masses(reference, g)
        li, lj, lon = g.locate(sd.lam)
        ni, nj, non = g.locate(nodes)
        for i, j in np.argwhere(mu > 0):
            in_box = (~lon) & (li == i) & (lj == j)
            u = HNVector(np.where(in_box, sd.xi / mu[i, j], 0.0), sd)
            c3p = max(c3p, norm_inf(B(u)))
            if g is grid and kernel is not None and ref[i, j] > 0:
                chi = HNVector(np.where(in_box, sd.xi / ref[i, j], 0.0), sd)
                sel = (~non) & (ni == i) & (nj == j)
                bd = kernel(nodes[sel][None, :], sd.lam[:, None]) @ w[sel] / ref[i, j]
                c2p = max(c2p, norm_inf(B(chi) - HNVector(sd.xi * bd, sd)))
    return float(c2p), float(c3p)


def dirac_propagator(B: ApproxOperator, theta_alpha: GeneralizedDistribution,
                     theta_beta: GeneralizedDistribution, sd: SpectralData, grid: BoxGrid,
                     reference=None, near_region=None):
    """<u(theta_beta) | B u(theta_alpha)> with the pairing's bound report."""
    ua = theta_vector(theta_alpha, sd, grid, reference)
    ub = theta_vector(theta_beta, sd, grid, reference)
    return pairing(ub, B(ua), near_region)
