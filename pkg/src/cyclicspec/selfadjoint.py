"""Self-adjoint generators recovered from unitary compressions via eigenphases."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compression import CompressionSpaces, SpectralData
from .embedding import embed_function
from .errors import UnsupportedModelError
from .measure import AtomicMeasure
from .models import OperatorModel, Polynomial, apply_polynomial

UNITARY_TOL = 1e-10


def principal_arg(z) -> np.ndarray:
    """Argument in (-pi, pi]; -pi is sent to +pi."""
    q = np.angle(np.asarray(z, dtype=np.complex128))
    return np.where(q <= -math.pi, math.pi, q)


@dataclass(frozen=True)
class PhaseData:
    """Eigenphases q_n of A_N; B_N acts on u_N(n) as multiplication by q_n."""

    q: np.ndarray
    sd: SpectralData

    def generator_matrix(self, cs: CompressionSpaces | None = None) -> np.ndarray:
        """B_N in H_N coordinates (Hermitian by construction)."""
        U = self.sd.U
        return (U * self.q[None, :]) @ U.conj().T


def log_spectrum(sd: SpectralData) -> PhaseData:
    if abs(sd.r_A - 1.0) > UNITARY_TOL:
        raise UnsupportedModelError(f"eigenphases need a unitary model, got r_A = {sd.r_A}")
    return PhaseData(principal_arg(sd.lam), sd)


def exp_check(pd: PhaseData, sd: SpectralData, cs: CompressionSpaces) -> float:
    """max-entry distance of U diag(exp(i q)) U^H from A_N."""
    U = sd.U
    R = (U * np.exp(1j * pd.q)[None, :]) @ U.conj().T - cs.A_N
    return float(np.max(np.abs(R), initial=0.0))


def pushforward_measure(am: AtomicMeasure, merge_tol: float = 1e-12) -> AtomicMeasure:
    """Image of ``am`` under lambda -> Arg(lambda), with coincident phases merged."""
    if len(am) == 0:
        return AtomicMeasure(np.zeros(0), np.zeros(0))
    q = principal_arg(am.points)
    order = np.argsort(q, kind="stable")
    q, m = q[order], am.masses[order]
    starts = np.concatenate([[0], np.nonzero(np.diff(q) > merge_tol)[0] + 1])
    return AtomicMeasure(q[starts], np.add.reduceat(m, starts))


def pushforward_rows(pm: AtomicMeasure):
    """CSV rows (q, mass)."""
    return [(float(q), float(m)) for q, m in zip(pm.points, pm.masses)]


def outer_phase_mass(pd: PhaseData, bound: float = 1 / 9) -> float:
    """Counting mass carried by eigenphases with |q| > bound."""
    return float(np.sum(pd.sd.xi[np.abs(pd.q) > bound] ** 2))


def generator_defect(model: OperatorModel, cs: CompressionSpaces, sd: SpectralData,
                     P: Polynomial) -> float:
    """||B_N F_N(f_P) - proj_{H_N} B P(A, A*) phi||_2 in eigencoordinates."""
    if model.kind != "exp_selfadjoint" or model.apply_B is None:
        raise UnsupportedModelError(f"model {model.kind!r} has no stored generator")
    pd = log_spectrum(sd)
    lhs = pd.q * embed_function(P, sd).coeffs
    ambient = model.apply_B(apply_polynomial(model, P))
    rhs = sd.U.conj().T @ (cs.basis.conj().T @ ambient)
    return float(np.linalg.norm(lhs - rhs))
