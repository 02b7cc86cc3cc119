"""Coefficient vectors in the eigenbasis of A_N, the weighted norms and consistency checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .compression import CompressionSpaces, SpectralData, operator_polynomial
from .measure import AtomicMeasure, in_rect
from .models import OperatorModel, Polynomial, apply_polynomial


@dataclass(frozen=True)
class HNVector:
    """Coefficients a_n of sum_n a_n u_N(n), tied to the SpectralData that defines u_N(n)."""

    coeffs: np.ndarray
    sd: SpectralData

    def __post_init__(self):
        a = np.asarray(self.coeffs, dtype=np.complex128).ravel()
        if a.shape[0] != self.sd.D_N:
            raise ValueError(f"expected {self.sd.D_N} coefficients, got {a.shape[0]}")
        object.__setattr__(self, "coeffs", a)

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def _check(self, other: "HNVector") -> None:
        if other.sd is not self.sd and not np.array_equal(other.sd.lam, self.sd.lam):
            raise ValueError("vectors belong to different eigenbases")

    def __add__(self, other: "HNVector") -> "HNVector":
        self._check(other)
        return HNVector(self.coeffs + other.coeffs, self.sd)

    def __sub__(self, other: "HNVector") -> "HNVector":
        self._check(other)
        return HNVector(self.coeffs - other.coeffs, self.sd)

    def __mul__(self, c: complex) -> "HNVector":
        return HNVector(c * self.coeffs, self.sd)

    __rmul__ = __mul__

    def __neg__(self) -> "HNVector":
        return HNVector(-self.coeffs, self.sd)

    def to_ambient(self, cs: CompressionSpaces) -> np.ndarray:
        """The vector sum_n a_n u_N(n) in ambient coordinates."""
        return cs.basis @ (self.sd.U @ self.coeffs)


def zero_vector(sd: SpectralData) -> HNVector:
    return HNVector(np.zeros(sd.D_N, dtype=np.complex128), sd)


def embed_function(f: Callable, sd: SpectralData) -> HNVector:
    """F_N(f): a_n = xi_N(n) f(lambda_N(n)).  ``f`` must accept an array of points."""
    vals = np.asarray(f(sd.lam), dtype=np.complex128)
    if vals.ndim == 0:
        vals = np.full(sd.D_N, complex(vals))
    return HNVector(sd.xi * vals, sd)


def region_mask(region, points: np.ndarray) -> np.ndarray:
    """Membership of ``points`` in a region.

    ``region`` may be None (all of S), a callable returning a mask, an object with
    a ``contains`` method (e.g. a spectrum estimate) or a sequence of closed rects.
    """
    z = np.asarray(points, dtype=np.complex128)
    if region is None:
        return np.ones(z.shape, dtype=bool)
    if callable(region):
        return np.asarray(region(z), dtype=bool)
    if hasattr(region, "contains"):
        return np.asarray(region.contains(z), dtype=bool)
    out = np.zeros(z.shape, dtype=bool)
    for rect in region:
        out |= in_rect(z, rect, closed=True)
    return out


def norm2(v: HNVector) -> float:
    # scale first so tiny coefficients do not underflow when squared
    a = np.abs(v.coeffs)
    top = float(a.max(initial=0.0))
    return top * float(np.linalg.norm(a / top)) if top > 0 else 0.0


def norm0(v: HNVector, sd: Optional[SpectralData] = None) -> float:
    """sum_n xi_N(n) |a_n|."""
    sd = v.sd if sd is None else sd
    return float(np.sum(sd.xi * np.abs(v.coeffs)))


def norm_inf(v: HNVector, sd: Optional[SpectralData] = None, region=None) -> float:
    """sup of |a_n| / xi_N(n) over eigenvalues in ``region``, reading 0^-1 as 0.

    Returns ``inf`` when a zero-weight eigenvector in the region carries a
    nonzero coefficient.
    """
    sd = v.sd if sd is None else sd
    inside = region_mask(region, sd.lam)
    a = np.abs(v.coeffs[inside])
    xi = sd.xi[inside]
    if a.size == 0:
        return 0.0
    zero = xi == 0.0
    if np.any(zero & (a > 0)):
        return float("inf")
    ratios = np.where(zero, 0.0, a / np.where(zero, 1.0, xi))
    return float(np.max(ratios))


def norm_inf_table(v: HNVector, spectrum, exponents: Sequence[int] = range(1, 11)):
    """(eps, norm_inf over the eps-fattened spectrum estimate) for eps = 2^-k."""
    out = []
    for k in exponents:
        eps = 2.0 ** (-k)
        out.append((eps, norm_inf(v, region=lambda z, e=eps: spectrum.contains(z, fatten=e))))
    return out


def _integrate(reference, g: Callable) -> complex:
    if isinstance(reference, (list, tuple)):
        pts = np.array([p for p, _ in reference], dtype=np.complex128)
        ms = np.array([m for _, m in reference], dtype=float)
        reference = AtomicMeasure(pts, ms)
    return complex(reference.integrate(g))


def isometry_defect(f: Callable, sd: SpectralData, reference) -> float:
    """| ||F_N(f)||_2^2 - integral of |f|^2 against the reference measure |."""
    lhs = norm2(embed_function(f, sd)) ** 2
    rhs = _integrate(reference, lambda z: np.abs(np.asarray(f(z), dtype=np.complex128)) ** 2).real
    return abs(lhs - rhs)


def l1_defect(f: Callable, sd: SpectralData, reference) -> float:
    """| ||F_N(f)||_0 - integral of |f| |; shrinks with N for continuous f."""
    lhs = norm0(embed_function(f, sd))
    rhs = _integrate(reference, lambda z: np.abs(np.asarray(f(z), dtype=np.complex128))).real
    return abs(lhs - rhs)


def polynomial_consistency(model: OperatorModel, cs: CompressionSpaces, sd: SpectralData,
                           P: Polynomial) -> float:
    """||F_N(f_P) - P(A_N, A*_N) phi_N||_2 with the right side in eigencoordinates."""
    if sd.U is None:
        raise ValueError("spectral data carries no eigenvectors")
    rhs = sd.U.conj().T @ (operator_polynomial(cs, P) @ cs.phi_N)
    return float(np.linalg.norm(embed_function(P, sd).coeffs - rhs))


def ambient_polynomial_defect(model: OperatorModel, cs: CompressionSpaces, sd: SpectralData,
                              P: Polynomial) -> float:
    """Distance of F_N(f_P) from the ambient P(A, A*) phi, which must lie in H_N for deg P <= N."""
    target = apply_polynomial(model, P)
    coords = cs.basis.conj().T @ target
    outside = float(np.linalg.norm(target - cs.basis @ coords))
    inside = float(np.linalg.norm(embed_function(P, sd).coeffs - sd.U.conj().T @ coords))
    return max(inside, outside)


def zero_good_defect(v: HNVector, sd: Optional[SpectralData], spectrum_boxes) -> float:
    """sum of xi |a_n| over eigenvalues outside the closure of ``spectrum_boxes``."""
    sd = v.sd if sd is None else sd
    outside = ~region_mask(spectrum_boxes, sd.lam)
    return float(np.sum(sd.xi[outside] * np.abs(v.coeffs[outside])))
