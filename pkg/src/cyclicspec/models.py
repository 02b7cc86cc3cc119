"""Exactly solvable stand-ins for (H, A, A*, phi).

Every model lives in a finite ambient space with a declared exactness horizon
``max_exact_N``: all monomials A^i (A*)^j phi with i, j <= max_exact_N are
computed without touching a truncation edge.  Models are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import KernelVectorError, NonCyclicError, NormBoundError, TruncationError, UnsupportedModelError
from .measure import AtomicMeasure, UniformCircleMeasure

Action = Callable[[np.ndarray], np.ndarray]

SELFADJOINT_BOUND = 1.0 / 9.0
_DISTINCT_TOL = 1e-12


@dataclass(frozen=True)
class Polynomial:
    """P(X, Y) = sum c_ij X^i Y^j, evaluated as f_P(z) = P(z, conj z).

    ``degree`` is the least N with every nonzero c_ij having i, j <= N.
    """

    coeffs: dict[tuple[int, int], complex]

    def __post_init__(self):
        clean = {(int(i), int(j)): complex(c) for (i, j), c in self.coeffs.items() if c != 0}
        if any(i < 0 or j < 0 for i, j in clean):
            raise ValueError("exponents must be nonnegative")
        object.__setattr__(self, "coeffs", clean)

    @property
    def degree(self) -> int:
        return max((max(i, j) for i, j in self.coeffs), default=0)

    def __call__(self, z):
        z = np.asarray(z, dtype=np.complex128)
        out = np.zeros(z.shape, dtype=np.complex128)
        zc = np.conj(z)
        for (i, j), c in self.coeffs.items():
            out = out + c * z**i * zc**j
        return out

    @classmethod
    def one(cls) -> "Polynomial":
        return cls({(0, 0): 1.0})

    @classmethod
    def monomial(cls, i: int, j: int, c: complex = 1.0) -> "Polynomial":
        return cls({(i, j): c})

    @classmethod
    def random(cls, degree: int, rng: np.random.Generator, scale: float = 1.0) -> "Polynomial":
        """Complex Gaussian coefficients on every (i, j) with i, j <= degree."""
        coeffs = {}
        for i in range(degree + 1):
            for j in range(degree + 1):
                coeffs[(i, j)] = scale * complex(rng.normal(), rng.normal()) / math.sqrt(2)
        return cls(coeffs)


@dataclass(frozen=True)
class OperatorModel:
    """Ambient finite-dimensional realization of (H, A, A*, phi).

    ``r_A`` is None for models without a global A*A = r I relation (direct sums
    of differently scaled operators); ``block_r`` then lists the per-block values.
    """

    kind: str
    parameters: dict[str, Any]
    ambient_dim: int
    r_A: Optional[float]
    M: int
    phi: np.ndarray
    apply_A: Action = field(repr=False)
    apply_Astar: Action = field(repr=False)
    max_exact_N: float = math.inf
    reference_measure: Any = None
    block_r: tuple[float, ...] = ()
    apply_B: Optional[Action] = field(default=None, repr=False)
    b_values: Optional[np.ndarray] = None

    @property
    def uniform(self) -> bool:
        return self.r_A is not None

    @property
    def eps_margin(self) -> float:
        """A positive margin with |lambda_N(n)| < M - margin for every N and n."""
        radius = math.sqrt(self.r_A) if self.uniform else max(math.sqrt(r) for r in self.block_r)
        return (self.M - radius) / 2

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": _jsonable(self.parameters),
            "ambient_dim": self.ambient_dim,
            "r_A": self.r_A,
            "M": self.M,
        }

    def monomial(self, i: int, j: int) -> np.ndarray:
        """A^i (A*)^j phi, applying A* first."""
        check_horizon(self, max(i, j))
        v = self.phi
        for _ in range(j):
            v = self.apply_Astar(v)
        for _ in range(i):
            v = self.apply_A(v)
        return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, OperatorModel):
        return obj.to_json()
    return obj


def check_horizon(model: OperatorModel, degree: int) -> None:
    if degree > model.max_exact_N:
        raise TruncationError(
            f"degree {degree} exceeds max_exact_N={model.max_exact_N} of model {model.kind!r}"
        )


def _min_M(radius: float) -> int:
    # smallest natural number strictly above the operator norm
    return int(math.floor(radius + 1e-12)) + 1


def _check_distinct(values: np.ndarray, what: str) -> None:
    v = np.asarray(values)
    for a in range(len(v)):
        for b in range(a + 1, len(v)):
            if abs(v[a] - v[b]) <= _DISTINCT_TOL:
                raise NonCyclicError(f"repeated {what} {v[a]!r}: phi cannot be cyclic")


def make_diag_unitary(eigenphases, weights) -> OperatorModel:
    """Diagonal unitary with cyclic vector phi_k = sqrt(weight_k)."""
    lam = np.asarray(eigenphases, dtype=np.complex128).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if lam.size == 0 or lam.shape != w.shape:
        raise ValueError("need equally many phases and weights")
    if np.any(np.abs(np.abs(lam) - 1) > 1e-12):
        raise ValueError("eigenphases must have modulus 1")
    if np.any(w <= 0):
        raise NonCyclicError("zero weight: phi misses an eigenvector")
    if abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must sum to 1")
    _check_distinct(lam, "eigenvalue")
    return OperatorModel(
        kind="diag",
        parameters={"phases": lam.tolist(), "weights": w.tolist()},
        ambient_dim=lam.size,
        r_A=1.0,
        M=_min_M(1.0),
        phi=np.sqrt(w).astype(np.complex128),
        apply_A=lambda v, lam=lam: _diag_apply(lam, v),
        apply_Astar=lambda v, lam=lam: _diag_apply(np.conj(lam), v),
        reference_measure=AtomicMeasure(lam, w),
    )


def _diag_apply(d: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return d * v if v.ndim == 1 else d[:, None] * v


def diag3() -> OperatorModel:
    """Phases (1, i, -1) with uniform weights."""
    return make_diag_unitary([1, 1j, -1], [1 / 3, 1 / 3, 1 / 3])


def make_bilateral_shift(ambient_half_width: int) -> OperatorModel:
    """Truncated bilateral shift on e_{-L..L} with phi = e_0.

    Its spectral measure at e_0 is the uniform measure on the unit circle.
    """
    L = int(ambient_half_width)
    if L < 1:
        raise ValueError("ambient_half_width must be >= 1")
    dim = 2 * L + 1

    def up(v):
        v = np.asarray(v)
        out = np.zeros_like(v, dtype=np.complex128)
        out[1:] = v[:-1]
        return out

    def down(v):
        v = np.asarray(v)
        out = np.zeros_like(v, dtype=np.complex128)
        out[:-1] = v[1:]
        return out

    phi = np.zeros(dim, dtype=np.complex128)
    phi[L] = 1.0
    return OperatorModel(
        kind="shift",
        parameters={"L": L},
        ambient_dim=dim,
        r_A=1.0,
        M=_min_M(1.0),
        phi=phi,
        apply_A=up,
        apply_Astar=down,
        max_exact_N=(L - 1) // 2,
        reference_measure=UniformCircleMeasure(1.0),
    )


def make_scaled_unitary(q: complex, base: OperatorModel) -> OperatorModel:
    """The operator q * U for a unitary base model U."""
    q = complex(q)
    if q == 0:
        raise ValueError("q must be nonzero")
    if base.r_A is None or abs(base.r_A - 1) > 1e-12:
        raise UnsupportedModelError("base model must be unitary (r_A = 1)")
    if q == 1:
        return base
    qc = q.conjugate()
    ref = base.reference_measure.scaled(q) if base.reference_measure is not None else None
    r = abs(q) ** 2
    return OperatorModel(
        kind="scaled",
        parameters={"q": q, "base": base},
        ambient_dim=base.ambient_dim,
        r_A=r,
        M=_min_M(math.sqrt(r)),
        phi=base.phi,
        apply_A=lambda v: q * base.apply_A(v),
        apply_Astar=lambda v: qc * base.apply_Astar(v),
        max_exact_N=base.max_exact_N,
        reference_measure=ref,
    )


def make_exp_selfadjoint(b_values, scale: float = 1.0) -> OperatorModel:
    """A = exp(i B) for B = scale * diag(b_values), phi uniform.

    The norm bound 1/9 is checked after scaling.
    """
    b = scale * np.asarray(b_values, dtype=float).ravel()
    if b.size == 0:
        raise ValueError("need at least one b value")
    if np.any(np.abs(b) >= SELFADJOINT_BOUND):
        raise NormBoundError(f"|b| must stay below 1/9, got max {np.max(np.abs(b))!r}")
    if np.any(b == 0):
        raise KernelVectorError("B has a kernel vector (b = 0)")
    _check_distinct(b, "b value")
    lam = np.exp(1j * b)
    w = np.full(b.size, 1.0 / b.size)
    return OperatorModel(
        kind="exp_selfadjoint",
        parameters={"b_values": np.asarray(b_values, dtype=float).tolist(), "scale": scale},
        ambient_dim=b.size,
        r_A=1.0,
        M=_min_M(1.0),
        phi=np.sqrt(w).astype(np.complex128),
        apply_A=lambda v: _diag_apply(lam, v),
        apply_Astar=lambda v: _diag_apply(np.conj(lam), v),
        reference_measure=AtomicMeasure(lam, w),
        apply_B=lambda v: _diag_apply(b.astype(np.complex128), v),
        b_values=b,
    )


def sadj3() -> OperatorModel:
    return make_exp_selfadjoint([0.1, -0.05, 0.02])


def _scaling(model: OperatorModel) -> complex:
    return model.parameters["q"] if model.kind == "scaled" else 1.0


def make_direct_sum(m1: OperatorModel, m2: OperatorModel) -> OperatorModel:
    """Orthogonal sum of two scaled-unitary models with distinct scalings.

    When |q1| != |q2| there is no global r_A and only the space construction
    (no unitary completion) is available.
    """
    if not (m1.uniform and m2.uniform):
        raise UnsupportedModelError("both summands must be scaled-unitary")
    if _scaling(m1) == _scaling(m2):
        raise ValueError("direct sum requires distinct scaling constants")
    d1 = m1.ambient_dim

    def split(f1, f2):
        def act(v):
            v = np.asarray(v)
            return np.concatenate([f1(v[:d1]), f2(v[d1:])], axis=0)
        return act

    uniform = abs(m1.r_A - m2.r_A) <= 1e-12
    ref = None
    if isinstance(m1.reference_measure, AtomicMeasure) and isinstance(m2.reference_measure, AtomicMeasure):
        ref = AtomicMeasure(
            np.concatenate([m1.reference_measure.points, m2.reference_measure.points]),
            np.concatenate([m1.reference_measure.masses, m2.reference_measure.masses]) / 2,
        )
    return OperatorModel(
        kind="direct_sum",
        parameters={"m1": m1, "m2": m2},
        ambient_dim=d1 + m2.ambient_dim,
        r_A=m1.r_A if uniform else None,
        M=max(m1.M, m2.M),
        phi=np.concatenate([m1.phi, m2.phi]) / math.sqrt(2),
        apply_A=split(m1.apply_A, m2.apply_A),
        apply_Astar=split(m1.apply_Astar, m2.apply_Astar),
        max_exact_N=min(m1.max_exact_N, m2.max_exact_N),
        reference_measure=ref,
        block_r=(m1.r_A, m2.r_A),
    )


def apply_polynomial(model: OperatorModel, P: Polynomial) -> np.ndarray:
    """P(A, A*) phi = sum c_ij A^i (A*)^j phi in ambient coordinates."""
    check_horizon(model, P.degree)
    if not P.coeffs:
        return np.zeros(model.ambient_dim, dtype=np.complex128)
    jmax = max(j for _, j in P.coeffs)
    # columns: (A*)^j phi, then A applied row by row; local cache only
    star = [model.phi.astype(np.complex128)]
    for _ in range(jmax):
        star.append(model.apply_Astar(star[-1]))
    out = np.zeros(model.ambient_dim, dtype=np.complex128)
    by_i: dict[int, list[tuple[int, complex]]] = {}
    for (i, j), c in P.coeffs.items():
        by_i.setdefault(i, []).append((j, c))
    for i in sorted(by_i):
        for j, c in by_i[i]:
            v = star[j]
            for _ in range(i):
                v = model.apply_A(v)
            out += c * v
    return out


def model_from_spec(kind: str, **params) -> OperatorModel:
    """Build a named model; used by the CLI configuration layer."""
    if kind == "diag3":
        return diag3()
    if kind == "diag":
        return make_diag_unitary(params["phases"], params["weights"])
    if kind == "shift":
        return make_bilateral_shift(int(params["L"]))
    if kind == "sadj3":
        return sadj3()
    if kind == "exp_selfadjoint":
        return make_exp_selfadjoint(params["b_values"], float(params.get("scale", 1.0)))
    if kind == "scaled":
        base = model_from_spec(**params["base"])
        return make_scaled_unitary(complex(params["q"]), base)
    raise ValueError(f"unknown model kind {kind!r}")
