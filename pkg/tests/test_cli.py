from __future__ import annotations

import csv
import io
import shutil

import pytest

from conftest import fixture_path
from stochha import cli
from stochha.dsl import edge_map_of, load


def run(*argv):
    buf = io.StringIO()
    code = cli.main([str(a) for a in argv], stdout=buf)
    return code, buf.getvalue()


@pytest.fixture()
def workdir(tmp_path):
    for name in ("fig1", "fig2b", "fig2c", "zeno_shrink"):
        shutil.copy(fixture_path(name), tmp_path / f"{name}.sha")
    return tmp_path


def _csv_rows(text):
    return [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))
            if r]


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0 and "stochha" in capsys.readouterr().out


def test_validate_reports_the_model(workdir):
    code, out = run("validate", workdir / "fig2b.sha")
    assert code == 0
    assert out.startswith("# stochha ") and "seed=none" in out and "model=sha256:" in out
    assert "TableSchedule" in out and out.rstrip().endswith("valid")


def test_provenance_hash_tracks_the_file(workdir):
    _, a = run("validate", workdir / "fig2b.sha")
    _, b = run("validate", workdir / "fig2c.sha")
    assert a.splitlines()[0] != b.splitlines()[0]


def test_simulate_writes_reproducible_files(workdir, tmp_path_factory):
    out_a = tmp_path_factory.mktemp("a")
    out_b = tmp_path_factory.mktemp("b")
    args = ["simulate", workdir / "fig2b.sha", "--seed", 7, "--trajectories", 2000,
            "--max-jumps", 3]
    code_a, text_a = run(*args, "--out", out_a, "--format", "csv")
    code_b, text_b = run(*args, "--out", out_b, "--format", "csv", "--workers", 4)
    assert code_a == code_b == 0
    for name in ("fig2b.paths.csv", "fig2b.first_jump.csv", "fig2b.first_delay_cdf.csv"):
        a = (out_a / name).read_bytes()
        assert a == (out_b / name).read_bytes(), name
        assert a.startswith(b"# stochha 0.1.0 seed=7 model=sha256:")
    assert text_a.replace(str(out_a), "") == text_b.replace(str(out_b), "")


def test_simulate_frequencies_are_near_the_kernel(workdir):
    code, out = run("simulate", workdir / "fig2b.sha", "--seed", 1, "--trajectories", 20000,
                    "--max-jumps", 1, "--out", workdir, "--format", "csv")
    assert code == 0
    freq = {r[0]: float(r[1]) for r in _csv_rows(out)[1:]}
    assert freq["e1"] == pytest.approx(0.51, abs=0.015)
    assert freq["e2"] == pytest.approx(0.19, abs=0.015)
    assert freq["eps_l0"] == pytest.approx(0.30, abs=0.015)
    cdf = _csv_rows((workdir / "fig2b.first_delay_cdf.csv").read_text())
    assert cdf[0] == ["t", "empirical", "analytic"]
    assert max(abs(float(e) - float(a)) for _, e, a in cdf[1:]) < 0.02


def test_simulate_needs_a_seed_and_a_bound(workdir, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["simulate", str(workdir / "fig2b.sha"), "--max-jumps", "1"])
    assert info.value.code == 2
    code, _ = run("simulate", workdir / "fig2b.sha", "--seed", 1, "--out", workdir)
    assert code == 2 and "--max-jumps" in capsys.readouterr().err


def test_trace_prob_by_quadrature(workdir):
    code, out = run("trace-prob", workdir / "fig2b.sha", "--trace", "eps_l0,e1", "--format", "csv")
    assert code == 0
    row = _csv_rows(out)[1]
    assert row[:2] == ["eps_l0 e1", "quadrature"]
    assert float(row[2]) == pytest.approx(0.198, abs=1e-6)


def test_trace_prob_by_simulation(workdir, capsys):
    code, out = run("trace-prob", workdir / "fig2c.sha", "--trace", "e1", "--seed", 3,
                    "--n", 20000, "--format", "csv")
    assert code == 0 and float(_csv_rows(out)[1][2]) == pytest.approx(0.1009, abs=0.01)
    code, _ = run("trace-prob", workdir / "fig2c.sha", "--trace", "e1")
    assert code == 2 and "--seed" in capsys.readouterr().err
    code, _ = run("trace-prob", workdir / "fig2c.sha", "--trace", "nope", "--seed", 1)
    assert code == 3


def test_translate_then_equiv(workdir):
    code, out = run("translate", workdir / "fig2c.sha", "--out", workdir)
    assert code == 0
    target = workdir / "fig2c.translated.sha"
    doc, model = load(target)
    assert len(model.automaton.variables) == 8
    assert edge_map_of(doc) == {"e1": "e1", "e2": "e2", **{f"eps_l{i}_{j}": f"eps_l{i}_{j}"
                                                           for i in range(3) for j in (1, 2)}}
    code, out = run("equiv", workdir / "fig2c.sha", target, "--map", "auto", "--depth", 1,
                    "--n", 20000, "--seed", 2)
    assert code == 0, out
    assert "verdict pass" in out


def test_equiv_reports_a_failure(workdir):
    text = (workdir / "fig2b.sha").read_text().replace("e1 0.7, e2 0.3", "e1 0.5, e2 0.5")
    (workdir / "other.sha").write_text(text)
    code, out = run("equiv", workdir / "fig2b.sha", workdir / "other.sha", "--map", "identity",
                    "--depth", 1, "--seed", 0, "--format", "csv")
    assert code == 1 and "verdict FAIL" in out


def test_equiv_map_file(workdir):
    (workdir / "map.txt").write_text("# a -> b\ne1 -> e1\ne2 e2\neps_l0 eps_l0\n"
                                     "eps_l1 eps_l1\neps_l2 eps_l2\n")
    code, out = run("equiv", workdir / "fig2b.sha", workdir / "fig2b.sha", "--map",
                    workdir / "map.txt", "--depth", 1, "--seed", 0)
    assert code == 0, out


def test_equiv_auto_needs_a_recorded_map(workdir, capsys):
    code, _ = run("equiv", workdir / "fig2b.sha", workdir / "fig2b.sha", "--seed", 0)
    assert code == 3 and "map" in capsys.readouterr().err


def test_race_tables_and_witness():
    code, out = run("race", "--rv", "exp(1)", "--rv", "exp(3)", "--format", "csv")
    assert code == 0
    rows = _csv_rows(out)
    wins = [float(r[4]) for r in rows[1:3]]
    assert wins == pytest.approx([0.25, 0.75], abs=1e-9)
    code, out = run("race", "--rv", "uniform(0, 10)", "--rv", "uniform(0, 10)",
                    "--witness", "uniform(0, 10)", "--format", "csv")
    assert code == 0
    props = {r[0]: r[1] for r in _csv_rows(out) if len(r) == 2}
    assert float(props["density_ratio"]) == pytest.approx(2.0, abs=1e-9)
    assert float(props["sup_cdf_distance"]) == pytest.approx(0.25, abs=1e-9)


def test_race_witness_of_disjoint_variables_fails():
    code, _ = run("race", "--rv", "uniform(0, 1)", "--rv", "uniform(2, 3)",
                  "--witness", "uniform(0, 3)")
    assert code == 1


def test_race_rejects_bad_laws(capsys):
    code, _ = run("race", "--rv", "gamma(2)")
    assert code == 2 and "input:" in capsys.readouterr().err


def test_zeno_exit_codes(workdir):
    code, out = run("zeno", workdir / "fig2b.sha", "--location", "l0", "--k", 3, "--format", "csv")
    assert code == 0
    probs = [float(r[1]) for r in _csv_rows(out)[1:]]
    assert probs == pytest.approx([0.3, 0.045, 0.0045], abs=1e-9)
    code, out = run("zeno", workdir / "zeno_shrink.sha", "--location", "l0", "--k", 2)
    assert code == 1 and "non-vanishing: True" in out


def test_zeno_rejects_race_models(workdir):
    code, _ = run("zeno", workdir / "fig2c.sha", "--location", "l0")
    assert code == 3


def test_parse_errors_exit_with_2(workdir, capsys):
    bad = workdir / "bad.sha"
    bad.write_text("model m\nvar x\nlocation a rate x = 1 $\n")
    code, _ = run("validate", bad)
    err = capsys.readouterr().err
    assert code == 2 and f"{bad}:3:" in err


def test_missing_file_exits_with_2(workdir):
    assert run("validate", workdir / "absent.sha")[0] == 2


def test_out_directory_from_the_environment(workdir, monkeypatch, tmp_path_factory):
    target = tmp_path_factory.mktemp("env")
    monkeypatch.setenv(cli.OUT_ENV, str(target))
    code, _ = run("translate", workdir / "fig2c.sha")
    assert code == 0 and (target / "fig2c.translated.sha").exists()
