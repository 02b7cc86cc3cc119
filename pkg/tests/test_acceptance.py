"""Every acceptance criterion at its stated tolerance.

One PASS/FAIL line per criterion is printed (visible with ``-s``) and
collected into the terminal summary.
"""

import filecmp

import pytest

from cyclicspec import acceptance, cli
from conftest import ACCEPTANCE_LINES


def _report(result: acceptance.CriterionResult) -> None:
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)


def _failures(result: acceptance.CriterionResult) -> str:
    bad = [c for c in result.checks if not c.passed]
    return "; ".join(f"{c.name}: {c.value:.6g} vs limit {c.limit:.6g}" for c in bad)


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    result = acceptance.CRITERIA[number](seed=0)
    _report(result)
    assert result.checks, "criterion produced no checks"
    assert result.passed, _failures(result)


def test_criterion_12_repeated_suite_runs_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    cli.main(["suite", "--out", str(first), "--seed", "0"])
    cli.main(["suite", "--out", str(second), "--seed", "0"])
    names = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    differing = [str(n) for n in names if not filecmp.cmp(first / n, second / n, shallow=False)]
    result = acceptance.CriterionResult(12, "repeated runs are byte-identical")
    result.add("differing output files", float(len(differing)), 0.0)
    _report(result)
    assert names and not differing, differing
