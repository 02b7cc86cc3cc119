"""Compressions H_N, the completed normal operator A_N and its phase-fixed eigensystem.

H_N is spanned by the monomials A^i (A*)^j phi with i, j <= N.  A_N agrees with
A on H^-_N (i < N) and maps the orthocomplement W^- of H^-_N onto the
orthocomplement W^+ of H^+_N (0 < i <= N) by sqrt(r_A) times a unitary that
sends the k-th W^- basis vector to the k-th W^+ basis vector.  The W^+ basis
is aligned with the polar part of A compressed to W^- -> W^+, so A_N = A when
H_N already reduces A.  All matrices are expressed in the orthonormal basis
``basis`` of H_N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NotNormalError, UnsupportedModelError
from .models import OperatorModel, Polynomial, check_horizon

DEFAULT_TOL = 1e-10
ADJOINT_TOL = 1e-10
NORMALITY_TOL = 1e-9
ZERO_WEIGHT = 1e-14


def orthonormalize(vectors, tol: float = DEFAULT_TOL, basis: Optional[np.ndarray] = None):
    """Gram-Schmidt with one reorthogonalization pass.

    Parameters
    ----------
    vectors : sequence of 1-d arrays or 2-d array with vectors as columns
        Processed in order.
    tol : float
        A vector is dropped when its residual norm falls below ``tol`` times its
        original norm.
    basis : array, optional
        Orthonormal columns to continue from; returned columns start with them.

    Returns
    -------
    basis : ndarray
        Orthonormal columns.
    rank : int
        Number of input vectors that survived.
    pivots : ndarray of bool
        Survival flag of every input vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    V = np.asarray(vectors, dtype=np.complex128)
    if isinstance(vectors, (list, tuple)):
        V = V.T if V.size else V.reshape(0, 0)
    n_in = V.shape[1] if V.ndim == 2 else 0
    dim = V.shape[0] if n_in else (basis.shape[0] if basis is not None else 0)
    start = 0 if basis is None else basis.shape[1]
    Q = np.zeros((dim, start + n_in), dtype=np.complex128)
    QH = np.zeros((start + n_in, dim), dtype=np.complex128)  # conjugate rows, kept in step
    if start:
        Q[:, :start] = basis
        QH[:start] = basis.conj().T
    k = start
    pivots = np.zeros(n_in, dtype=bool)
    for col in range(n_in):
        v = V[:, col]
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        w = v.copy()
        for _ in range(2):
            if k:
                w = w - Q[:, :k] @ (QH[:k] @ w)
        res = np.linalg.norm(w)
        if res < tol * norm0:
            continue
        Q[:, k] = w / res
        QH[k] = Q[:, k].conj()
        pivots[col] = True
        k += 1
    return Q[:, :k], k - start, pivots


def _complement(P: np.ndarray, dim: int, count: int) -> np.ndarray:
    """Orthonormal basis of the orthocomplement of span(P) in C^dim.

    Greedy column pivoting over the identity: at each step the coordinate axis
    with the largest residual wins (ties to the lowest index).
    """
    R = np.eye(dim, dtype=np.complex128) - P @ P.conj().T
    R = R - P @ (P.conj().T @ R)
    out = np.zeros((dim, count), dtype=np.complex128)
    for k in range(count):
        norms = np.linalg.norm(R, axis=0)
        piv = int(np.argmax(norms))
        w = R[:, piv].copy()
        for _ in range(2):
            w = w - P @ (P.conj().T @ w)
            if k:
                w = w - out[:, :k] @ (out[:, :k].conj().T @ w)
        w /= np.linalg.norm(w)
        out[:, k] = w
        R = R - np.outer(w, w.conj() @ R)
    return out


def _null_basis(Z: np.ndarray, k: int) -> np.ndarray:
    """Canonical orthonormal basis of span(Z): projected coordinate axes, in order."""
    if Z.shape[1] == 0:
        return Z
    proj = Z @ Z.conj().T
    proj = proj[:, np.linalg.norm(proj, axis=0) > 1e-8]
    basis, _, _ = orthonormalize(proj, 1e-8)
    return basis[:, : Z.shape[1]]


def _aligned_unitary(T: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Unitary V used to re-index the W^+ basis so that W^-_k maps to (W^+ V)_k.

    ``T`` is the compression of A / sqrt(r) from W^- to W^+.  On the range of T
    V is its polar factor, so A_N = A whenever H_N reduces A; on the null part
    the canonical bases are matched in order.
    """
    k = T.shape[0]
    X, S, Yh = np.linalg.svd(T)
    r = int(np.sum(S > tol))
    V = X[:, :r] @ Yh[:r]
    if r < k:
        L = _null_basis(X[:, r:], k)
        R = _null_basis(Yh[r:].conj().T, k)
        V = V + L @ R.conj().T
    return V


@dataclass(frozen=True)
class KrylovSpaces:
    """Orthonormal basis of H_N whose first ``dim_minus`` columns span H^-_N."""

    N: int
    basis: np.ndarray
    dim_minus: int
    pivots_minus: np.ndarray
    pivots_top: np.ndarray

    @property
    def D_N(self) -> int:
        return self.basis.shape[1]


def _generators(model: OperatorModel, N: int, full: bool):
    """Monomials for H^-_N and for the remaining row i = N, row-major in (i, j).

    With A* A = r I, A^i (A*)^j phi = r^min(i,j) A^(i-m) (A*)^(j-m) phi is a
    multiple of a monomial from an earlier row, so the reduced list spans the
    same nested spaces.
    """
    star = [model.phi.astype(np.complex128)]
    for _ in range(N):
        star.append(model.apply_Astar(star[-1]))
    if not full:
        up = [star[0]]
        for _ in range(N):
            up.append(model.apply_A(up[-1]))
        minus = star + up[1:N]
        top = [up[N]] if N > 0 else star
        if N == 0:
            return [], top
        return minus, top
    rows = [np.column_stack(star)]
    for _ in range(N):
        rows.append(model.apply_A(rows[-1]))
    minus = [rows[i][:, j] for i in range(N) for j in range(N + 1)]
    top = [rows[N][:, j] for j in range(N + 1)]
    return minus, top


def krylov_spaces(model: OperatorModel, N: int, tol: float = DEFAULT_TOL,
                  full_monomials: Optional[bool] = None) -> KrylovSpaces:
    """Nested orthonormal bases H^-_N subset H_N (no completion; any model)."""
    if N < 0:
        raise ValueError("N must be >= 0")
    check_horizon(model, N)
    full = (not model.uniform) if full_monomials is None else full_monomials
    minus, top = _generators(model, N, full)
    dim = model.ambient_dim
    Qm, _, piv_m = orthonormalize(np.column_stack(minus) if minus else np.zeros((dim, 0)), tol)
    if Qm.shape[0] == 0:
        Qm = np.zeros((dim, 0), dtype=np.complex128)
    Q, _, piv_t = orthonormalize(np.column_stack(top), tol, basis=Qm)
    return KrylovSpaces(N, Q, Qm.shape[1], piv_m, piv_t)


@dataclass(frozen=True)
class CompressionSpaces:
    """H_N with the completed operator A_N and its adjoint, in basis coordinates.

    ``plus_basis`` and ``w_plus`` are the orthonormal bases of H^+_N and W^+ in
    H_N coordinates; the basis of W^- consists of the coordinate axes
    ``dim_minus..D_N-1``.
    """

    N: int
    model: OperatorModel
    basis: np.ndarray
    dim_minus: int
    plus_basis: np.ndarray
    w_plus: np.ndarray
    A_N: np.ndarray
    Astar_N: np.ndarray
    r_A: float
    phi_N: np.ndarray

    @property
    def D_N(self) -> int:
        return self.basis.shape[1]

    @property
    def dim_w(self) -> int:
        return self.D_N - self.dim_minus

    def adjoint_defect(self) -> float:
        return float(np.max(np.abs(self.Astar_N - self.A_N.conj().T), initial=0.0))

    def normality_defect(self) -> float:
        """max-entry distance of A*_N A_N and A_N A*_N from r_A I."""
        eye = self.r_A * np.eye(self.D_N)
        d1 = np.max(np.abs(self.Astar_N @ self.A_N - eye), initial=0.0)
        d2 = np.max(np.abs(self.A_N @ self.Astar_N - eye), initial=0.0)
        return float(max(d1, d2))

    def project(self, ambient: np.ndarray) -> np.ndarray:
        """Coordinates of the orthogonal projection onto H_N."""
        return self.basis.conj().T @ ambient


def build_compression(model: OperatorModel, N: int, tol: float = DEFAULT_TOL,
                      full_monomials: Optional[bool] = None) -> CompressionSpaces:
    """Construct H_N, A_N and A*_N with the canonical k-th-to-k-th completion."""
    ks = krylov_spaces(model, N, tol, full_monomials)
    if not model.uniform:
        raise UnsupportedModelError(
            f"model {model.kind!r} has no global r_A; the W-completion is undefined"
        )
    Q, dm, D = ks.basis, ks.dim_minus, ks.D_N
    s = math.sqrt(model.r_A)

    AQm = model.apply_A(Q[:, :dm]) if dm else np.zeros((model.ambient_dim, 0), dtype=np.complex128)
    C = Q.conj().T @ AQm
    if dm:
        P, rank_p, _ = orthonormalize(C, tol)
        if rank_p != dm:
            raise NotNormalError(f"dim H^+ = {rank_p} differs from dim H^- = {dm}")
    else:
        P = np.zeros((D, 0), dtype=np.complex128)
    Wm = np.eye(D, dtype=np.complex128)[:, dm:]
    Wp = _complement(P, D, D - dm)
    if D > dm:
        CW = Q.conj().T @ model.apply_A(Q[:, dm:]) / s
        Wp = Wp @ _aligned_unitary(Wp.conj().T @ CW)

    A_N = np.zeros((D, D), dtype=np.complex128)
    A_N[:, :dm] = C
    A_N[:, dm:] = s * Wp

    if dm:
        AsQP = Q.conj().T @ model.apply_Astar(Q @ P)
    else:
        AsQP = np.zeros((D, 0), dtype=np.complex128)
    images = np.hstack([AsQP, s * Wm])
    Astar_N = images @ np.hstack([P, Wp]).conj().T

    cs = CompressionSpaces(
        N=N, model=model, basis=Q, dim_minus=dm, plus_basis=P, w_plus=Wp,
        A_N=A_N, Astar_N=Astar_N, r_A=float(model.r_A), phi_N=Q.conj().T @ model.phi,
    )
    if cs.adjoint_defect() > ADJOINT_TOL * max(1.0, s):
        raise NotNormalError(f"A*_N is not the adjoint of A_N (defect {cs.adjoint_defect():.3e})")
    return cs


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues lambda_N(n), weights xi_N(n) >= 0 and eigenvectors (columns of U).

    ``U`` is None for data restored from JSON, which carries no eigenvectors.
    """

    N: int
    lam: np.ndarray
    xi: np.ndarray
    U: Optional[np.ndarray]
    r_A: float
    M: float

    @property
    def D_N(self) -> int:
        return len(self.lam)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "D_N": self.D_N,
            "lambda": [[float(z.real), float(z.imag)] for z in self.lam],
            "xi": [float(x) for x in self.xi],
        }

    @classmethod
    def from_json(cls, data: dict, r_A: float = 1.0, M: Optional[float] = None) -> "SpectralData":
        lam = np.array([complex(a, b) for a, b in data["lambda"]], dtype=np.complex128)
        xi = np.array(data["xi"], dtype=float)
        if M is None:
            M = int(math.floor(math.sqrt(r_A) + 1e-12)) + 1
        return cls(int(data["N"]), lam, xi, None, r_A, M)


def _clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Split sorted values into runs whose consecutive gaps are <= tol."""
    if len(values) == 0:
        return []
    cuts = np.nonzero(np.diff(values) > tol)[0] + 1
    return np.split(np.arange(len(values)), cuts)


def _fix_phase(u: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, float]:
    c = np.vdot(u, phi)
    if abs(c) > ZERO_WEIGHT:
        return u * (c / abs(c)), float(abs(c))
    k = int(np.argmax(np.abs(u) > 1e-10))
    return u * (np.conj(u[k]) / abs(u[k])), 0.0


def normal_eig(A: np.ndarray, Astar: np.ndarray, phi: np.ndarray, r_A: float = 1.0,
               cluster_tol: Optional[float] = None):
    """Eigendecomposition of a normal matrix through its commuting Hermitian parts.

    Diagonalizes (A + A*)/2, clusters its eigenvalues, diagonalizes the
    compression of (A - A*)/(2i) inside each cluster and recombines
    lambda = h1 + i h2.  Eigenvectors are phased so that <u|phi> >= 0; inside a
    degenerate eigenspace the basis is rotated so that a single vector carries
    the whole overlap with phi.

    Returns
    -------
    lam, xi, U
    """
    tol = (1e-8 * math.sqrt(r_A)) if cluster_tol is None else cluster_tol
    H1 = (A + Astar) / 2
    H1 = (H1 + H1.conj().T) / 2
    H2 = (A - Astar) / 2j
    H2 = (H2 + H2.conj().T) / 2
    w1, V = np.linalg.eigh(H1)
    lams, xis, cols = [], [], []
    for idx in _clusters(w1, tol):
        Vc = V[:, idx]
        if len(idx) == 1:
            groups = [(Vc, np.array([np.real(np.vdot(Vc[:, 0], H2 @ Vc[:, 0]))]))]
        else:
            Hc = Vc.conj().T @ H2 @ Vc
            w2, Y = np.linalg.eigh((Hc + Hc.conj().T) / 2)
            vecs = Vc @ Y
            groups = [(vecs[:, g], w2[g]) for g in _clusters(w2, tol)]
        for G, h2 in groups:
            m = G.shape[1]
            if m > 1:
                c = G.conj().T @ phi
                nc = np.linalg.norm(c)
                if nc > ZERO_WEIGHT:
                    R, _ = np.linalg.qr(np.column_stack([c / nc, np.eye(m)]))
                    G = G @ R
            for k in range(m):
                u, x = _fix_phase(G[:, k], phi)
                if m > 1 and k > 0 and x <= np.sqrt(ZERO_WEIGHT):
                    x = 0.0
                h1 = float(np.real(np.vdot(u, H1 @ u)))
                lams.append(complex(h1, float(h2[k])))
                xis.append(x)
                cols.append(u)
    U = np.column_stack(cols) if cols else np.zeros((A.shape[0], 0), dtype=np.complex128)
    return np.array(lams, dtype=np.complex128), np.array(xis), U


def spectral_data(cs: CompressionSpaces, phi_in_HN: Optional[np.ndarray] = None) -> SpectralData:
    """Phase-fixed eigensystem of A_N."""
    if cs.normality_defect() > NORMALITY_TOL * cs.r_A:
        raise NotNormalError(f"A_N fails normality (defect {cs.normality_defect():.3e})")
    phi = cs.phi_N if phi_in_HN is None else np.asarray(phi_in_HN, dtype=np.complex128)
    lam, xi, U = normal_eig(cs.A_N, cs.Astar_N, phi, cs.r_A)
    return SpectralData(cs.N, lam, xi, U, cs.r_A, cs.model.M)


def compress(model: OperatorModel, N: int, **kw) -> tuple[CompressionSpaces, SpectralData]:
    cs = build_compression(model, N, **kw)
    return cs, spectral_data(cs)


def conjugate_eigen_check(sd: SpectralData, cs: CompressionSpaces) -> float:
    """max_n ||A*_N u(n) - conj(lambda(n)) u(n)||_2."""
    R = cs.Astar_N @ sd.U - sd.U * np.conj(sd.lam)[None, :]
    return float(np.max(np.linalg.norm(R, axis=0), initial=0.0))


def reconstruction_defect(sd: SpectralData, cs: CompressionSpaces) -> float:
    """max-entry distance of U diag(lambda) U^H from A_N."""
    R = (sd.U * sd.lam[None, :]) @ sd.U.conj().T - cs.A_N
    return float(np.max(np.abs(R), initial=0.0))


def operator_polynomial(cs: CompressionSpaces, P: Polynomial) -> np.ndarray:
    """The matrix P(A_N, A*_N) = sum c_ij A_N^i (A*_N)^j."""
    D = cs.D_N
    out = np.zeros((D, D), dtype=np.complex128)
    if not P.coeffs:
        return out
    imax = max(i for i, _ in P.coeffs)
    jmax = max(j for _, j in P.coeffs)
    Ap = [np.eye(D, dtype=np.complex128)]
    for _ in range(imax):
        Ap.append(cs.A_N @ Ap[-1])
    Sp = [np.eye(D, dtype=np.complex128)]
    for _ in range(jmax):
        Sp.append(cs.Astar_N @ Sp[-1])
    for (i, j), c in P.coeffs.items():
        out += c * (Ap[i] @ Sp[j])
    return out


def monomial_defect(cs: CompressionSpaces) -> float:
    """Largest violation of A_N m_ij = m_{i+1,j} (i < N) and A*_N m_ij = m_{i,j+1} (j < N)
    over projected monomials m_ij = A^i (A*)^j phi."""
    model, N = cs.model, cs.N
    worst = 0.0
    for i in range(N + 1):
        for j in range(N + 1):
            m = cs.project(model.monomial(i, j))
            if i < N:
                nxt = cs.project(model.monomial(i + 1, j)) if i + 1 <= model.max_exact_N else None
                if nxt is not None:
                    worst = max(worst, float(np.linalg.norm(cs.A_N @ m - nxt)))
            if j < N:
                nxt = cs.project(model.monomial(i, j + 1)) if j + 1 <= model.max_exact_N else None
                if nxt is not None:
                    worst = max(worst, float(np.linalg.norm(cs.Astar_N @ m - nxt)))
    return worst


def compress_many(model: OperatorModel, Ns: Sequence[int], workers: int = 1, **kw):
    """(CompressionSpaces, SpectralData) for every N, in input order."""
    if workers <= 1:
        return [compress(model, N, **kw) for N in Ns]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda N: compress(model, N, **kw), Ns))
