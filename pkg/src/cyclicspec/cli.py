"""Command-line experiment runner.

Usage::

    cyclicspec measure     --config configs/shift_measure.toml --out runs/measure
    cyclicspec isometry    --config configs/shift_isometry.toml --out runs/iso
    cyclicspec selfadjoint --config configs/sadj3.toml --out runs/sadj
    cyclicspec kernel      --config configs/shift_kernel.toml --out runs/kernel
    cyclicspec dirac       --config configs/diag3_dirac.toml --out runs/dirac --dual-convention
    cyclicspec suite       --out runs/suite --seed 0 [--quick]

Configs are TOML with every number written as a decimal string.  Outputs are
CSV files (header row, floats with 17 significant digits) plus summary.json.
Exit codes: 0 success, 1 usage or configuration error, 2 a check failed.
"""

from __future__ import annotations

import argparse
import csv
import filecmp
import json
import math
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import acceptance
from .compression import compress
from .distributions import (
    SCHEDULE_HEADER,
    dirac,
    good_pair_schedule,
    pairing,
    representation_defect,
    theta_vector,
)
from .embedding import embed_function, isometry_defect, polynomial_consistency
from .errors import ConfigError, CyclicSpecError
from .kernelprop import (
    PROPAGATOR_HEADER,
    builtin_kernel,
    check_C1,
    check_C2,
    check_C2prime_C3prime,
    dirac_propagator,
    kernel_estimate,
    kernel_operator,
)
from .measure import (
    BOXMASS_HEADER,
    box_masses,
    build_grid,
    counting_measure,
    detect_atomic_lines,
    estimate_spectrum,
    grid_family,
    measure_discrepancy,
)
from .models import (
    Polynomial,
    make_bilateral_shift,
    make_diag_unitary,
    make_exp_selfadjoint,
    make_scaled_unitary,
    model_from_spec,
)
from .selfadjoint import (
    exp_check,
    generator_defect,
    log_spectrum,
    outer_phase_mass,
    pushforward_measure,
    pushforward_rows,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

FUNCTIONS: dict[str, Callable] = {
    "one": lambda z: np.ones_like(z),
    "z": lambda z: z,
    "zbar": lambda z: np.conj(z),
    "z2": lambda z: z**2,
    "two_re": lambda z: z + np.conj(z),
    "abs2": lambda z: np.abs(z) ** 2 + 0j,
    "exp_re": lambda z: np.exp(z.real) + 0j,
}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _reject_raw_numbers(node: Any, path: str = "") -> None:
    if isinstance(node, bool):
        return
    if isinstance(node, (int, float)):
        raise ConfigError(f"{path or 'value'}: numbers must be written as decimal strings")
    if isinstance(node, dict):
        for k, v in node.items():
            _reject_raw_numbers(v, f"{path}.{k}" if path else k)
    elif isinstance(node, list):
        for i, v in enumerate(node):
            _reject_raw_numbers(v, f"{path}[{i}]")


def _real(s: str, what: str) -> float:
    try:
        return float(str(s))
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {s!r} as a real number") from exc


def _int(s: str, what: str) -> int:
    try:
        return int(str(s))
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {s!r} as an integer") from exc


def _complex(s: str, what: str) -> complex:
    try:
        return complex(str(s).replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {s!r} as a complex number") from exc


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    _reject_raw_numbers(cfg)
    return cfg


def build_model(spec: dict):
    if "kind" not in spec:
        raise ConfigError("model.kind is required")
    kind = spec["kind"]
    try:
        if kind == "shift":
            return make_bilateral_shift(_int(spec.get("L", "0"), "model.L"))
        if kind == "diag":
            phases = [_complex(p, "model.phases") for p in spec["phases"]]
            weights = [_real(w, "model.weights") for w in spec["weights"]]
            return make_diag_unitary(phases, weights)
        if kind == "exp_selfadjoint":
            b = [_real(x, "model.b_values") for x in spec["b_values"]]
            return make_exp_selfadjoint(b, _real(spec.get("scale", "1"), "model.scale"))
        if kind == "scaled":
            return make_scaled_unitary(_complex(spec["q"], "model.q"), build_model(spec["base"]))
        if kind in ("diag3", "sadj3"):
            return model_from_spec(kind)
    except KeyError as exc:
        raise ConfigError(f"model {kind!r} is missing field {exc}") from exc
    except (ValueError, CyclicSpecError) as exc:
        raise ConfigError(f"model {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


class RunConfig:
    """Parsed and validated configuration shared by every subcommand."""

    def __init__(self, cfg: dict, seed: int | None = None, quick: bool = False):
        self.raw = cfg
        self.model = build_model(cfg.get("model", {}))
        run = cfg.get("run", {})
        Ns = [_int(n, "run.N") for n in run.get("N", [])]
        if not Ns:
            raise ConfigError("run.N must list at least one N")
        if Ns != sorted(Ns) or len(set(Ns)) != len(Ns):
            raise ConfigError("run.N must be strictly ascending")
        if quick:
            Ns = sorted({min(N, acceptance.QUICK_N_CAP) for N in Ns})
        if any(N < 0 or N > self.model.max_exact_N for N in Ns):
            raise ConfigError(f"run.N exceeds the model's exactness horizon {self.model.max_exact_N}")
        self.Ns = Ns
        self.seed = seed if seed is not None else _int(run.get("seed", "0"), "run.seed")
        self.workers = max(1, _int(run.get("workers", "1"), "run.workers"))
        self.level = _int(run.get("level", "2"), "run.level")
        self.max_level = _int(run.get("max_level", str(max(self.level, 4))), "run.max_level")
        self.floor = _real(run.get("floor", "0.001"), "run.floor")
        self.delta = _real(run.get("delta", "1e-12"), "run.delta")
        self.tol = {k: _real(v, f"tolerances.{k}") for k, v in cfg.get("tolerances", {}).items()}
        self.kernel = cfg.get("kernel", {})
        self.dist = cfg.get("distributions", {})
        self.functions = self._functions(cfg.get("functions", {}).get("names", ["one", "z", "two_re"]))

    @staticmethod
    def _functions(names: Sequence[str]) -> list[str]:
        for n in names:
            if n not in FUNCTIONS:
                raise ConfigError(f"unknown function {n!r}; choose from {sorted(FUNCTIONS)}")
        return list(names)

    def tolerance(self, key: str, default: float) -> float:
        return self.tol.get(key, default)

    def spectral_sequence(self):
        """(cs, sd) for every N, computed on a worker pool and returned in order."""
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda N: compress(self.model, N), self.Ns))

    def reference(self, sds):
        ref = self.model.reference_measure
        return ref if ref is not None else counting_measure(sds[-1])

    def grids(self, sds, max_level: int):
        xs, ys = detect_atomic_lines([counting_measure(sd) for sd in sds], self.delta)
        return grid_family(self.model.M, max_level, sorted(set(xs) | set(ys))), (xs, ys)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Summary:
    def __init__(self, command: str, rc: RunConfig | None):
        self.command = command
        self.rc = rc
        self.checks: list[dict] = []

    def check(self, name: str, value: float, limit: float, ok: bool | None = None) -> None:
        value, limit = float(value), float(limit)
        if ok is None:
            ok = value <= limit
        self.checks.append({"name": name, "value": value, "limit": limit, "passed": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def write(self, out: Path) -> int:
        body = {"command": self.command, "checks": self.checks, "passed": self.passed}
        if self.rc is not None:
            body.update(model=self.rc.model.to_json(), N=self.rc.Ns, seed=self.rc.seed)
        write_json(out / "summary.json", body)
        for c in self.checks:
            if not c["passed"]:
                print(f"FAIL {c['name']}: {c['value']:.6g} > {c['limit']:.6g}")
        print(f"{self.command}: {'all checks passed' if self.passed else 'some checks failed'}")
        return EXIT_OK if self.passed else EXIT_FAIL


def _c(z: complex) -> tuple[float, float]:
    return float(np.real(z)), float(np.imag(z))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_measure(rc: RunConfig, out: Path) -> int:
    summ = Summary("measure", rc)
    pairs = rc.spectral_sequence()
    sds = [sd for _, sd in pairs]
    ams = [counting_measure(sd) for sd in sds]
    xs, ys = detect_atomic_lines(ams, rc.delta)
    write_json(out / "atoms.json", {"delta": rc.delta, "x_lines": xs, "y_lines": ys})
    grid = build_grid(rc.model.M, rc.level, sorted(set(xs) | set(ys)))
    ref = rc.reference(sds)
    bms, disc_rows = [], []
    for N, am in zip(rc.Ns, ams):
        bm = box_masses(am, grid)
        bms.append(bm)
        write_csv(out / f"boxmasses_N{N}.csv", BOXMASS_HEADER, bm.csv_rows())
        disc_rows.append((N, rc.level, measure_discrepancy(bm, ref)))
        summ.check(f"total mass N={N}", abs(bm.total - 1.0), 1e-10)
    write_csv(out / "discrepancy.csv", ("N", "level", "discrepancy"), disc_rows)
    est = estimate_spectrum(bms, rc.floor)
    boxes = [
        {"i": i, "j": j, "rect": list(grid.rect(i, j)), "mass": float(bms[-1].mass[i, j]),
         "stable": bool(s)}
        for (i, j), s in zip(est.boxes, est.stable)
    ]
    spec_mass = float(sum(b["mass"] for b in boxes))
    write_json(out / "spectrum.json", {"level": rc.level, "floor": rc.floor, "boxes": boxes,
                                       "mass": spec_mass})
    if "discrepancy" in rc.tol:
        summ.check("final discrepancy", disc_rows[-1][2], rc.tol["discrepancy"])
    if "spectrum_mass" in rc.tol:
        summ.check("spectrum mass deficit", 1 - spec_mass, rc.tol["spectrum_mass"])
    return summ.write(out)


def _random_polys(rng: np.random.Generator, count: int, max_degree: int) -> list[Polynomial]:
    return [Polynomial.random(int(rng.integers(0, max_degree + 1)), rng) for _ in range(count)]


def cmd_isometry(rc: RunConfig, out: Path) -> int:
    summ = Summary("isometry", rc)
    pairs = rc.spectral_sequence()
    ref = rc.reference([sd for _, sd in pairs])
    iso_tol = rc.tolerance("isometry", 1e-9)
    poly_tol = rc.tolerance("polynomial", 1e-8)
    rng = np.random.default_rng(rc.seed)
    count = _int(rc.raw.get("run", {}).get("polynomials", "10"), "run.polynomials")
    iso_rows, poly_rows = [], []
    for (cs, sd), N in zip(pairs, rc.Ns):
        for name in rc.functions:
            f = FUNCTIONS[name]
            lhs = float(np.sum(np.abs(embed_function(f, sd).coeffs) ** 2))
            rhs = ref.integrate(lambda z, f=f: np.abs(f(z)) ** 2).real
            d = isometry_defect(f, sd, ref)
            iso_rows.append((N, name, lhs, rhs, d, iso_tol))
            summ.check(f"isometry N={N} f={name}", d, iso_tol)
        for k, P in enumerate(_random_polys(rng, count, min(N, 3))):
            d = polynomial_consistency(rc.model, cs, sd, P)
            poly_rows.append((N, k, P.degree, d, poly_tol))
            summ.check(f"polynomial N={N} #{k}", d, poly_tol)
    write_csv(out / "isometry.csv", ("N", "function", "norm2_sq", "reference", "defect", "budget"),
              iso_rows)
    write_csv(out / "polynomials.csv", ("N", "index", "degree", "defect", "budget"), poly_rows)
    return summ.write(out)


def cmd_selfadjoint(rc: RunConfig, out: Path) -> int:
    summ = Summary("selfadjoint", rc)
    if rc.model.r_A is None or abs(rc.model.r_A - 1.0) > 1e-12:
        raise ConfigError("selfadjoint needs a unitary model (r_A = 1)")
    pairs = rc.spectral_sequence()
    exp_tol = rc.tolerance("exp_check", 1e-8)
    gen_tol = rc.tolerance("generator", 1e-10)
    has_b = rc.model.kind == "exp_selfadjoint"
    polys = [Polynomial.one(), Polynomial.monomial(1, 0), Polynomial.monomial(1, 1)]
    rows = []
    for (cs, sd), N in zip(pairs, rc.Ns):
        pd = log_spectrum(sd)
        write_csv(out / f"pushforward_N{N}.csv", ("q", "mass"),
                  pushforward_rows(pushforward_measure(counting_measure(sd))))
        ec = exp_check(pd, sd, cs)
        outer = outer_phase_mass(pd)
        gen = math.nan
        if has_b:
            gen = max(generator_defect(rc.model, cs, sd, P) for P in polys if P.degree <= N)
            summ.check(f"generator N={N}", gen, gen_tol)
        summ.check(f"exp check N={N}", ec, exp_tol)
        rows.append((N, ec, outer, gen, gen_tol))
    if has_b:
        summ.check("outer phase mass at largest N", rows[-1][2], rc.tolerance("outer_mass", 0.05))
    write_csv(out / "selfadjoint.csv", ("N", "exp_check", "outer_mass", "generator_defect", "budget"),
              rows)
    return summ.write(out)


def _pairs(spec: dict, key: str = "pairs") -> list[tuple[complex, complex]]:
    out = []
    for p in spec.get(key, []):
        if len(p) != 2:
            raise ConfigError(f"{key} entries must be [alpha, beta]")
        out.append((_complex(p[0], key), _complex(p[1], key)))
    return out


def _kernel(rc: RunConfig):
    name = rc.kernel.get("name")
    if name is None:
        raise ConfigError("kernel.name is required")
    try:
        return builtin_kernel(name, math.sqrt(rc.model.r_A or 1.0),
                              _complex(rc.kernel.get("value", "1"), "kernel.value"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_kernel(rc: RunConfig, out: Path) -> int:
    summ = Summary("kernel", rc)
    K = _kernel(rc)
    pairs = rc.spectral_sequence()
    sds = [sd for _, sd in pairs]
    fam, _ = rc.grids(sds, rc.max_level)
    ops = [kernel_operator(K, sd) for sd in sds]
    rng = np.random.default_rng(rc.seed)
    polys = _random_polys(rng, 5, 3)
    cond_rows = []
    for B, sd in zip(ops, sds):
        c1 = check_C1(B, sd, seed=rc.seed)
        c2 = check_C2(B, K, sd, None, polys)
        c2p, c3p = check_C2prime_C3prime(B, sd, fam[min(rc.level, rc.max_level)])
        cond_rows.append((sd.N, c1, K.sup_bound, c2, c2p, c3p))
        summ.check(f"C1 N={sd.N}", c1 - K.sup_bound, 1e-6)
        summ.check(f"C2 N={sd.N}", c2, rc.tolerance("c2", 1e-8))
    write_csv(out / "conditions.csv", ("N", "c1", "K_D", "c2", "c2p", "c3p"), cond_rows)
    prop_rows, err_rows = [], []
    for a, b in _pairs(rc.kernel):
        try:
            est = kernel_estimate(ops, a, b, range(0, rc.max_level + 1), fam, K)
        except CyclicSpecError as exc:
            summ.check(f"estimate ({a}, {b}) available: {exc}", 1, 0)
            continue
        prop_rows.extend(est.csv_rows())
        err = abs(est.value - complex(K(a, b)))
        p, N = max(((r[0], r[1]) for r in est.rows), key=lambda t: (t[1], t[0]))
        err_rows.append((*_c(a), *_c(b), p, N, err, est.budget))
        summ.check(f"kernel error ({a}, {b})", err, est.budget)
    write_csv(out / "propagator.csv", PROPAGATOR_HEADER, prop_rows)
    write_csv(out / "kernel.csv", ("alpha_re", "alpha_im", "beta_re", "beta_im", "p", "N",
                                   "error", "budget"), err_rows)
    return summ.write(out)


def cmd_dirac(rc: RunConfig, out: Path, dual: bool = False) -> int:
    summ = Summary("dirac", rc)
    pairs = rc.spectral_sequence()
    sds = [sd for _, sd in pairs]
    fam, _ = rc.grids(sds, max(rc.level, rc.max_level))
    ref = rc.reference(sds)
    points = [_complex(p, "distributions.dirac") for p in rc.dist.get("dirac", [])]
    if not points:
        raise ConfigError("distributions.dirac must list at least one point")
    thetas = [dirac(a) for a in points]
    sched = good_pair_schedule(thetas, sds, fam, rc.max_level)
    write_csv(out / "schedule.csv", SCHEDULE_HEADER, sched.csv_rows())
    grid = fam[rc.level]
    limit = rc.tol.get("representation")
    header = ["N", "level", "alpha_re", "alpha_im", "function", "value_re", "value_im",
              "expected_re", "expected_im"]
    if dual:
        header += ["expected_linear_re", "expected_linear_im"]
    header += ["defect", "budget"]
    rows = []
    for sd in sds:
        for a, th in zip(points, thetas):
            for name in rc.functions:
                f = FUNCTIONS[name]
                try:
                    u = theta_vector(th, sd, grid, ref)
                except CyclicSpecError as exc:
                    summ.check(f"theta vector N={sd.N} alpha={a}: {exc}", 1, 0)
                    continue
                val, _ = pairing(embed_function(f, sd), u)
                d, budget = representation_defect(th, f, sd, grid, ref)
                fa = complex(f(np.array([a]))[0])
                row = [sd.N, rc.level, *_c(a), name, *_c(val), *_c(np.conj(fa))]
                if dual:
                    row += [*_c(fa)]
                rows.append(row + [d, budget])
                summ.check(f"representation N={sd.N} alpha={a} f={name} vs budget", d, budget)
                if limit is not None:
                    summ.check(f"representation N={sd.N} alpha={a} f={name}", d, limit)
    write_csv(out / "representation.csv", header, rows)
    if rc.kernel:
        K = _kernel(rc)
        prop_rows = []
        for a, b in _pairs(rc.kernel):
            for sd in sds:
                B = kernel_operator(K, sd)
                try:
                    val, rep = dirac_propagator(B, dirac(a), dirac(b), sd, grid, ref)
                except CyclicSpecError as exc:
                    summ.check(f"dirac propagator N={sd.N} ({a}, {b}): {exc}", 1, 0)
                    continue
                prop_rows.append((*_c(a), *_c(b), rc.level, sd.N, *_c(val),
                                  rep["near_bound"] + rep["far_bound"]))
        write_csv(out / "dirac_propagator.csv", PROPAGATOR_HEADER, prop_rows)
    return summ.write(out)


def _suite_outputs(out: Path, seed: int, quick: bool) -> list[acceptance.CriterionResult]:
    results = acceptance.run_criteria(seed=seed, quick=quick)
    rows = []
    for r in results:
        for c in r.checks:
            if not c.timing:
                rows.append((r.number, c.name, c.value, c.limit, c.passed))
    write_csv(out / "acceptance.csv", ("criterion", "check", "value", "limit", "passed"), rows)
    return results


def cmd_suite(out: Path, seed: int, quick: bool) -> int:
    results = _suite_outputs(out, seed, quick)
    with tempfile.TemporaryDirectory() as tmp:
        _suite_outputs(Path(tmp), seed, quick)
        same = _same_tree_subset(out, Path(tmp))
    det = acceptance.CriterionResult(12, "repeated runs are byte-identical")
    det.add("differing output files", 0.0 if same else 1.0, 0.0)
    results.append(det)
    for r in results:
        print(r.line())
    write_json(out / "summary.json", {
        "command": "suite",
        "seed": seed,
        "quick": quick,
        "criteria": [{"number": r.number, "title": r.title, "passed": r.passed} for r in results],
        "passed": all(r.passed for r in results),
    })
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _same_tree_subset(full: Path, partial: Path) -> bool:
    """Every file under ``partial`` exists under ``full`` with identical bytes."""
    names = sorted(p.relative_to(partial) for p in partial.rglob("*") if p.is_file())
    return bool(names) and all(filecmp.cmp(full / n, partial / n, shallow=False) for n in names)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cyclicspec", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("measure", "box masses, discrepancies, spectrum estimate and atomic lines"),
        ("isometry", "isometry and polynomial-consistency defects"),
        ("selfadjoint", "eigenphases, pushforward measures and generator defects"),
        ("kernel", "kernel recovery from box propagators"),
        ("dirac", "Dirac representation defects and Dirac propagators"),
        ("suite", "run the acceptance matrix"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, required=name != "suite")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=_seed, default=None)
        p.add_argument("--quick", action="store_true", help=f"cap N at {acceptance.QUICK_N_CAP}")
        if name == "dirac":
            p.add_argument("--dual-convention", action="store_true",
                           help="also report the linear-convention expected values")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out: Path = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "suite":
            seed = args.seed if args.seed is not None else 0
            if args.config is not None:
                cfg = load_config(args.config)
                if args.seed is None:
                    seed = _int(cfg.get("run", {}).get("seed", "0"), "run.seed")
            return cmd_suite(out, seed, args.quick)
        rc = RunConfig(load_config(args.config), args.seed, args.quick)
        if args.command == "measure":
            return cmd_measure(rc, out)
        if args.command == "isometry":
            return cmd_isometry(rc, out)
        if args.command == "selfadjoint":
            return cmd_selfadjoint(rc, out)
        if args.command == "kernel":
            return cmd_kernel(rc, out)
        return cmd_dirac(rc, out, args.dual_convention)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
