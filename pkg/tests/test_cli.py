import io
import json

import pytest

from metastable_rates.cli import main

RAW_W = """\
c: 6
raw_W:
  infA_fV: [8, 4, 4, 0, 0]
  W_rel: [0, 4, 2, 6, 3]
  W1: 5
  W_pair: [5, 3, 5, 2]
  h1: 4
"""

DW = """\
landscape: {family: double_well, h_L: 1, h_R: "1/2"}
set: {case: I}
c: 1.5
"""

RAW_V = """\
raw_V:
  V: [[0, 2, inf], ["1/2", 0, 1], [3, 0.25, 0]]
  infA_fV: [1, 0, 2]
graphs:
  W: [[1], [1, 3]]
  P: [["1/2", "1/4", "1/4"], ["1/3", "1/3", "1/3"], [0, "1/2", "1/2"]]
"""

SIM = """\
landscape: {family: double_well, h_L: 1, h_R: "1/2"}
set: {case: I}
eps: [0.3, 0.27, 0.25]
c: 1.2
replicas: 3
seed: 5
"""


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="c.yaml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


@pytest.mark.parametrize("target", ["example1", "example2"])
def test_verify_examples(target):
    code, out, _ = run(["verify", target])
    assert code == 0
    assert f"{target}: exact match" in out
    assert "variance rate" in out


def test_rates_from_raw_W(cfg, tmp_path):
    code, out, _ = run(["rates", "--config", cfg(RAW_W), "--out", str(tmp_path / "o")])
    assert code == 0
    assert "SingleCycle" in out
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["report"]["variance_rate"] == 0
    assert summary["report"]["bias_rate"] == 5
    assert summary["resolved"]["subcommand"] == "rates"
    assert (tmp_path / "o" / "rates.tsv").read_text().startswith("# ")


def test_rates_double_well_closed_form(cfg):
    code, out, _ = run(["rates", "--config", cfg(DW)])
    assert code == 0
    assert "h_L - 2 h_R = 0" in out


def test_graphs_exact_output(cfg):
    code, out, _ = run(["graphs", "--config", cfg(RAW_V)])
    assert code == 0
    assert "W={1}        min weight 0.75" in out
    assert "stationary    1/4  3/8  3/8" in out


@pytest.mark.parametrize("text,needle", [
    ("eps: [0.2]\n", "exactly one"),
    (DW + "eps: [0.1, 0.2]\n", "eps"),
    (DW + "bogus: 1\n", "bogus"),
])
def test_config_errors_exit_2(cfg, text, needle):
    code, _, err = run(["rates", "--config", cfg(text)])
    assert code == 2
    assert err.startswith("config error") and needle in err


def test_missing_config_exits_2():
    assert run(["rates"])[0] == 2


def test_step_budget_exits_3(cfg, tmp_path):
    code, _, err = run(["simulate", "--config", cfg(SIM), "--out", str(tmp_path / "o"), "--max-steps", "1000"])
    assert code == 3
    assert "budget exceeded" in err


def test_simulate_is_byte_identical(cfg, tmp_path):
    path = cfg(SIM)
    files = []
    for k, jobs in enumerate(("1", "2")):
        out = tmp_path / f"run{k}"
        assert run(["simulate", "--config", path, "--out", str(out), "--jobs", jobs])[0] == 0
        files.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(files[0]) == {"cycles.tsv", "replicas.tsv", "eps_summary.tsv", "regression.tsv", "summary.json"}
    assert files[0] == files[1]
    header = files[0]["replicas.tsv"].decode().split("\n")
    assert header[0] == "# config:"
    assert any("package_version" in line for line in header if line.startswith("#"))
    assert not any("jobs" in line for line in header if line.startswith("#"))


def test_seed_override_changes_output(cfg, tmp_path):
    path = cfg(SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", path, "--out", str(a)])[0] == 0
    assert run(["simulate", "--config", path, "--out", str(b), "--seed", "6"])[0] == 0
    assert (a / "cycles.tsv").read_bytes() != (b / "cycles.tsv").read_bytes()
