"""The acceptance matrix: every criterion as a function returning named checks.

Both the pytest acceptance module and the ``suite`` subcommand run these.
Checks flagged ``timing`` compare wall-clock runtimes; their values are never
written to output files so that repeated runs stay byte-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .compression import compress, conjugate_eigen_check
from .distributions import (
    dirac,
    from_function,
    good_pair_schedule,
    norm0_bound_check,
    representation_defect,
    theta_vector,
)
from .embedding import embed_function, isometry_defect, norm2, polynomial_consistency
from .kernelprop import (
    box_vector,
    check_C1,
    check_C2,
    check_C2prime_C3prime,
    constant_kernel,
    dirac_propagator,
    exp_re_kernel,
    kernel_estimate,
    kernel_operator,
    propagator,
    xy_conj_kernel,
)
from .measure import (
    box_masses,
    build_grid,
    counting_measure,
    detect_atomic_lines,
    grid_family,
    max_usable_level,
    measure_discrepancy,
    sector_masses,
)
from .models import (
    Polynomial,
    diag3,
    make_bilateral_shift,
    make_diag_unitary,
    make_scaled_unitary,
    sadj3,
)
from .selfadjoint import exp_check, generator_defect, log_spectrum, pushforward_measure

QUICK_N_CAP = 100


@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool
    timing: bool = False


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name: str, value: float, limit: float, ok: bool | None = None,
            timing: bool = False) -> None:
        value = float(value)
        if ok is None:
            ok = value <= limit
        self.checks.append(Check(name, value, float(limit), bool(ok), timing))

    def line(self) -> str:
        worst = [c.name for c in self.checks if not c.passed]
        tail = "" if not worst else f"  failing: {', '.join(worst)}"
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.title}{tail}"


def _cap(Ns, quick: bool):
    return sorted({min(N, QUICK_N_CAP) for N in Ns}) if quick else list(Ns)


def _shift_for(N: int):
    return make_bilateral_shift(2 * N + 2)


def _match_error(values, expected) -> float:
    """Largest distance from an expected value to the nearest computed one (and back)."""
    v = np.asarray(values, dtype=np.complex128)
    e = np.asarray(expected, dtype=np.complex128)
    d = np.abs(v[:, None] - e[None, :])
    return float(max(d.min(axis=0).max(), d.min(axis=1).max()))


def _isolating_family(sd, M: int, max_level: int):
    """Grid family whose cuts avoid every coordinate line carrying an atom of ``sd``."""
    xs, ys = detect_atomic_lines([counting_measure(sd)], delta=1e-12)
    return grid_family(M, max_level, sorted(set(xs) | set(ys)))


# ---------------------------------------------------------------------------


def criterion_1(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(1, "exact finite recovery on diag3")
    t0 = time.perf_counter()
    _, sd = compress(diag3(), 1)
    am = counting_measure(sd)
    res.add("atom masses vs 1/3", np.max(np.abs(am.masses - 1 / 3)), 1e-10)
    res.add("eigenvalues vs {1, i, -1}", _match_error(sd.lam, [1, 1j, -1]), 1e-10)
    res.add("runtime seconds", time.perf_counter() - t0, 1.0, timing=True)
    return res


def criterion_2(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(2, "equidistribution of the bilateral shift")
    t0 = time.perf_counter()
    Ns = _cap([50, 100, 200], quick)
    model = _shift_for(max(Ns))
    grid = build_grid(model.M, 2)
    disc = []
    for N in Ns:
        cs, sd = compress(model, N)
        am = counting_measure(sd)
        res.add(f"D_N at N={N}", abs(cs.D_N - (2 * N + 1)), 0)
        dev = float(np.max(np.abs(sector_masses(am, 8) - 1 / 8)))
        res.add(f"sector deviation N={N}", dev, 1 / (2 * N + 1))
        if N == 50:
            res.add("sector deviation N=50 vs 0.01", dev, 0.01)
        disc.append(measure_discrepancy(box_masses(am, grid), model.reference_measure))
    for k in range(1, len(disc)):
        res.add(f"discrepancy decreases N={Ns[k - 1]}->{Ns[k]}", disc[k], disc[k - 1],
                ok=disc[k] < disc[k - 1])
    res.add("runtime seconds", time.perf_counter() - t0, 30.0, timing=True)
    return res


def criterion_3(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(3, "isometry of the coefficient embedding")
    Ns = _cap([1, 5, 20, 50, 100, 200], quick)
    model = _shift_for(max(Ns))
    f = lambda z: z + np.conj(z)  # noqa: E731
    for N in Ns:
        _, sd = compress(model, N)
        res.add(f"shift |norm2^2 - 2| N={N}", abs(norm2(embed_function(f, sd)) ** 2 - 2), 1e-9)
    m = diag3()
    _, sd = compress(m, 1)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        P = Polynomial.random(int(rng.integers(0, 4)), rng)
        worst = max(worst, isometry_defect(P, sd, m.reference_measure))
    res.add("diag3 worst defect over 20 polynomials", worst, 1e-12)
    return res


def criterion_4(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(4, "embedding of polynomials matches P(A_N, A*_N) phi_N")
    rng = np.random.default_rng(seed + 4)
    for name, model, N in (("shift", _shift_for(5), 5), ("diag3", diag3(), 1)):
        cs, sd = compress(model, N)
        worst = 0.0
        for _ in range(50):
            P = Polynomial.random(int(rng.integers(0, N + 1)), rng)
            worst = max(worst, polynomial_consistency(model, cs, sd, P))
        res.add(f"{name} N={N} worst over 50 polynomials", worst, 1e-8)
    return res


def invariant_models():
    shift = make_bilateral_shift(41)
    return {
        "diag3": diag3(),
        "sadj3": sadj3(),
        "2*diag3": make_scaled_unitary(2.0, diag3()),
        "shift": shift,
        "i*shift": make_scaled_unitary(1j, shift),
        "0.5*shift": make_scaled_unitary(0.5, shift),
        "diag5": make_diag_unitary(np.exp(1j * np.array([0.3, 1.1, 2.0, -2.5, -0.7])),
                                   [0.1, 0.2, 0.3, 0.25, 0.15]),
    }


def criterion_5(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(5, "normality, adjointness and weight invariants")
    for name, model in invariant_models().items():
        r = model.r_A
        norm_d = adj_d = neg = tot = eig = 0.0
        for N in range(0, 21):
            cs, sd = compress(model, N)
            norm_d = max(norm_d, cs.normality_defect() / r)
            adj_d = max(adj_d, cs.adjoint_defect())
            neg = max(neg, float(-np.min(sd.xi)))
            tot = max(tot, abs(float(np.sum(sd.xi**2)) - 1))
            eig = max(eig, conjugate_eigen_check(sd, cs) / math.sqrt(r))
        res.add(f"{name} normality / r_A", norm_d, 1e-9)
        res.add(f"{name} adjoint defect", adj_d, 1e-10)
        res.add(f"{name} min xi >= 0", neg, 0.0)
        res.add(f"{name} |sum xi^2 - 1|", tot, 1e-10)
        res.add(f"{name} A*_N eigen defect / sqrt(r_A)", eig, 1e-8)
    return res


def criterion_6(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(6, "self-adjoint lift on sadj3")
    model = sadj3()
    cs, sd = compress(model, 1)
    pd = log_spectrum(sd)
    res.add("phases vs b", _match_error(pd.q, model.b_values), 1e-10)
    res.add("exp check", exp_check(pd, sd, cs), 1e-10)
    pm = pushforward_measure(counting_measure(sd))
    res.add("pushforward total - 1", abs(pm.total - 1.0), 1e-15)
    for label, P in (("1", Polynomial.one()), ("X", Polynomial.monomial(1, 0)),
                     ("XY", Polynomial.monomial(1, 1))):
        res.add(f"generator defect P={label}", generator_defect(model, cs, sd, P), 1e-10)
    return res


def criterion_7(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(7, "distribution representation by pairing")
    t0 = time.perf_counter()
    m = diag3()
    _, sd = compress(m, 1)
    grid = _isolating_family(sd, m.M, 2)[2]
    th = dirac(1j)
    for label, f in (("1", lambda z: np.ones_like(z)), ("z", lambda z: z), ("z^2", lambda z: z**2)):
        d, _ = representation_defect(th, f, sd, grid, m.reference_measure)
        res.add(f"diag3 dirac(i) f={label}", d, 1e-10)
    N = _cap([300], quick)[0]
    model = _shift_for(N)
    _, sd = compress(model, N)
    grid = build_grid(model.M, 3)
    d, budget = representation_defect(dirac(1.0), lambda z: z**2, sd, grid, model.reference_measure)
    res.add(f"shift N={N} defect vs budget", d, budget)
    res.add(f"shift N={N} defect vs 0.05", d, 0.05)
    res.add("runtime seconds", time.perf_counter() - t0, 60.0, timing=True)
    return res


def criterion_8(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(8, "box coefficient sums stay below 16 K")
    scenarios = []
    m = diag3()
    sds = [compress(m, N)[1] for N in (1, 2, 3)]
    scenarios.append(("diag3", m, sds, dirac(1j)))
    Ns = _cap([50, 100, 200], quick)
    sh = _shift_for(max(Ns))
    scenarios.append(("shift", sh, [compress(sh, N)[1] for N in Ns], dirac(1.0)))
    for name, model, sds, th_dirac in scenarios:
        grids = grid_family(model.M, 4)
        g_dist = from_function(lambda z: z, model.reference_measure, name="g=z")
        for label, th in (("dirac", th_dirac), ("g=z", g_dist)):
            sched = good_pair_schedule([th], sds, grids, n_max=4)
            valid = [e for e in sched.entries if e.valid]
            res.add(f"{name} {label} valid entries", len(valid), 1, ok=len(valid) >= 1)
            for e in valid:
                value, bound = norm0_bound_check(th, None, grids[e.n])
                res.add(f"{name} {label} N={e.N} n={e.n}", value, bound)
    return res


def _shift_kernel_setup(quick: bool):
    N = _cap([300], quick)[0]
    model = _shift_for(N)
    _, sd = compress(model, N)
    K = exp_re_kernel(1.0)
    return model, sd, K, kernel_operator(K, sd)


def criterion_9(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(9, "kernel recovery from box propagators")
    t0 = time.perf_counter()
    m = diag3()
    _, sd = compress(m, 1)
    fam = _isolating_family(sd, m.M, 2)
    B = kernel_operator(xy_conj_kernel(), sd)
    res.add("diag3 xy_conj (1, i) vs -i", abs(propagator(B, 1, 1j, 2, sd, fam) + 1j), 1e-10)
    model, sd, K, B = _shift_kernel_setup(quick)
    fam = grid_family(model.M, 8)
    for k in range(3):
        beta = complex(np.exp(2j * np.pi * k / 8))
        top = max_usable_level(counting_measure(sd), fam, [1.0, beta])
        est = kernel_estimate([B], 1.0, beta, range(0, top + 1), fam)
        err = abs(est.value - complex(K(1.0, beta)))
        res.add(f"shift k={k} error vs budget", err, est.budget)
        res.add(f"shift k={k} error vs 0.1", err, 0.1)
    res.add("runtime seconds", time.perf_counter() - t0, 300.0, timing=True)
    return res


def criterion_10(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(10, "Dirac propagators agree with box propagators")
    m = diag3()
    _, sd = compress(m, 1)
    fam = _isolating_family(sd, m.M, 2)
    B = kernel_operator(xy_conj_kernel(), sd)
    cases = [("diag3", m, sd, B, fam, 1.0 + 0j, 1j, 2)]
    model, sd2, K, B2 = _shift_kernel_setup(quick)
    fam2 = grid_family(model.M, 8)
    for k in range(3):
        beta = complex(np.exp(2j * np.pi * k / 8))
        top = max_usable_level(counting_measure(sd2), fam2, [1.0, beta])
        cases.append((f"shift k={k}", model, sd2, B2, fam2, 1.0 + 0j, beta, top))
    for name, model, sd, B, fam, a, b, p in cases:
        grid = fam[p]
        same = all(
            np.array_equal(theta_vector(dirac(z), sd, grid, model.reference_measure).coeffs,
                           box_vector(z, p, sd, fam).coeffs)
            for z in (a, b)
        )
        res.add(f"{name} coefficients identical", 0.0 if same else 1.0, 0.0)
        val, _ = dirac_propagator(B, dirac(a), dirac(b), sd, grid, model.reference_measure)
        box = propagator(B, a, b, p, sd, fam)
        res.add(f"{name} |dirac - box propagator|", abs(val - box), 0.0)
        est = kernel_estimate([B], a, b, range(0, p + 1), fam)
        res.add(f"{name} |dirac - K(alpha, beta)| vs budget",
                abs(val - complex(B.kernel(a, b))), est.budget)
    return res


def criterion_11(seed: int = 0, quick: bool = False) -> CriterionResult:
    res = CriterionResult(11, "condition checks on kernel-built operators")
    rng = np.random.default_rng(seed + 11)
    polys = [Polynomial.random(int(rng.integers(0, 4)), rng) for _ in range(5)]
    kernels = [xy_conj_kernel(), exp_re_kernel(), constant_kernel(0.5 - 0.25j)]
    N = _cap([50], quick)[0]
    setups = [("diag3", diag3(), 1), ("shift", _shift_for(N), N)]
    for name, model, n in setups:
        _, sd = compress(model, n)
        grid = _isolating_family(sd, model.M, 2)[2] if name == "diag3" else build_grid(model.M, 2)
        for K in kernels:
            B = kernel_operator(K, sd)
            res.add(f"{name} {K.name} C1 - K_D", check_C1(B, sd, seed=seed) - K.sup_bound, 1e-6)
            res.add(f"{name} {K.name} C2", check_C2(B, K, sd, None, polys), 1e-8)
            if name == "diag3":
                _, c3p = check_C2prime_C3prime(B, sd, grid)
                res.add(f"{name} {K.name} c3p vs 3 K_D", c3p, 3 * K.sup_bound)
    return res


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11,
}


def run_criteria(numbers=None, seed: int = 0, quick: bool = False) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if numbers is None else numbers
    return [CRITERIA[n](seed=seed, quick=quick) for n in numbers]
