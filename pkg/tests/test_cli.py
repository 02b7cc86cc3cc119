import csv
import filecmp
import json
from pathlib import Path

import pytest

from cyclicspec import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path: Path, text: str) -> Path:
    p = tmp_path / "run.toml"
    p.write_text(text)
    return p


def _rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


DIAG3_MEASURE = """
[model]
kind = "diag3"
[run]
N = ["1", "2"]
level = "2"
"""

SHIFT_SMALL = """
[model]
kind = "shift"
L = "122"
[run]
N = ["30", "60"]
level = "2"
max_level = "3"
[distributions]
dirac = ["1j"]
[functions]
names = ["z", "exp_re"]
[kernel]
name = "exp_re"
pairs = [["1j", "-1"]]
"""


def test_measure_diag3(tmp_path):
    cfg = _write(tmp_path, DIAG3_MEASURE)
    out = tmp_path / "out"
    assert cli.main(["measure", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "boxmasses_N1.csv")
    masses = sorted(float(r["mass"]) for r in rows if float(r["mass"]) > 0)
    assert masses == pytest.approx([1 / 3] * 3)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True


def test_missing_output_dir_is_created(tmp_path):
    cfg = _write(tmp_path, DIAG3_MEASURE)
    out = tmp_path / "a" / "b" / "c"
    assert cli.main(["measure", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "summary.json").exists()


def test_empty_N_list(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "diag3"\n[run]\nN = []\n')
    assert cli.main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_raw_float_rejected(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "shift"\nL = 10\n[run]\nN = ["1"]\n')
    assert cli.main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_unsorted_N_rejected(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "diag3"\n[run]\nN = ["2", "1"]\n')
    assert cli.main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_N_beyond_horizon_rejected(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "shift"\nL = "5"\n[run]\nN = ["3"]\n')
    assert cli.main(["measure", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_missing_config_file(tmp_path):
    assert cli.main(["measure", "--config", str(tmp_path / "nope.toml"),
                     "--out", str(tmp_path / "o")]) == 1


def test_usage_error_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["measure", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_unknown_kernel(tmp_path):
    cfg = _write(tmp_path, DIAG3_MEASURE + '[kernel]\nname = "gaussian"\npairs = [["1", "1j"]]\n')
    assert cli.main(["kernel", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_kernel_diag3_exact(tmp_path):
    out = tmp_path / "k"
    assert cli.main(["kernel", "--config", str(CONFIGS / "diag3_kernel.toml"),
                     "--out", str(out)]) == 0
    rows = _rows(out / "propagator.csv")
    first = [r for r in rows if r["alpha_re"] == "1" and r["beta_im"] == "1"]
    assert first
    assert float(first[-1]["value_re"]) == pytest.approx(0, abs=1e-14)
    assert float(first[-1]["value_im"]) == pytest.approx(-1, abs=1e-14)


def test_dirac_dual_convention(tmp_path):
    cfg = CONFIGS / "diag3_dirac.toml"
    plain, dual = tmp_path / "plain", tmp_path / "dual"
    assert cli.main(["dirac", "--config", str(cfg), "--out", str(plain)]) == 0
    assert cli.main(["dirac", "--config", str(cfg), "--out", str(dual), "--dual-convention"]) == 0
    hp = _rows(plain / "representation.csv")[0].keys()
    hd = _rows(dual / "representation.csv")[0].keys()
    assert "expected_linear_re" not in hp
    assert {"expected_linear_re", "expected_linear_im"} <= set(hd)
    for r in _rows(dual / "representation.csv"):
        # the two conventions are complex conjugates of each other
        assert float(r["expected_im"]) == pytest.approx(-float(r["expected_linear_im"]))


def test_failed_check_gives_exit_2(tmp_path):
    cfg = _write(tmp_path, SHIFT_SMALL + '[tolerances]\nrepresentation = "1e-14"\n')
    assert cli.main(["dirac", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["passed"] is False


def test_shift_kernel_and_dirac_run(tmp_path):
    cfg = _write(tmp_path, SHIFT_SMALL)
    assert cli.main(["kernel", "--config", str(cfg), "--out", str(tmp_path / "k")]) == 0
    assert cli.main(["dirac", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "schedule.csv").exists()
    assert (tmp_path / "d" / "dirac_propagator.csv").exists()


def test_selfadjoint_and_isometry(tmp_path):
    assert cli.main(["selfadjoint", "--config", str(CONFIGS / "sadj3.toml"),
                     "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "pushforward_N1.csv").exists()
    cfg = _write(tmp_path, SHIFT_SMALL + '[tolerances]\nisometry = "1e-9"\n')
    assert cli.main(["isometry", "--config", str(cfg), "--out", str(tmp_path / "i")]) == 0


def test_selfadjoint_rejects_scaled(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "scaled"\nq = "2"\n[model.base]\nkind = "diag3"\n'
                           '[run]\nN = ["1"]\n')
    assert cli.main(["selfadjoint", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_quick_caps_N(tmp_path):
    cfg = _write(tmp_path, '[model]\nkind = "shift"\nL = "402"\n[run]\nN = ["50", "200"]\n'
                           'level = "2"\n')
    out = tmp_path / "q"
    cli.main(["measure", "--config", str(cfg), "--out", str(out), "--quick"])
    summary = json.loads((out / "summary.json").read_text())
    assert max(summary["N"]) <= 100


def test_outputs_deterministic(tmp_path):
    cfg = _write(tmp_path, SHIFT_SMALL)
    for name in ("a", "b"):
        assert cli.main(["dirac", "--config", str(cfg), "--out", str(tmp_path / name),
                         "--seed", "5"]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert cmp.left_list == cmp.right_list
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", cmp.common_files,
                                           shallow=False)
    assert mismatch == [] and errors == []


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_parse(name):
    rc = cli.RunConfig(cli.load_config(CONFIGS / name))
    assert rc.Ns
