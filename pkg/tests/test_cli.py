import csv
import io
import json

import pytest

from bvip import cli
from bvip.bivariate import BivariatePoly, decompose_separable, side_degrees
from bvip.bounds import compare_bounds
from bvip.experiments import (CSV_COLUMNS, ExperimentConfig, InstanceSpec, gen_instance,
                              rows_to_csv, run_sweep)
from bvip.spectrum import MultilinearPoly, parse_poly

MAJ3 = "0.5*x1 + 0.5*x2 + 0.5*x3 - 0.5*x1*x2*x3"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def files(tmp_path):
    (tmp_path / "maj3.txt").write_text(MAJ3 + "\n")
    (tmp_path / "bad.txt").write_text("x1*x1\n")
    star4 = BivariatePoly.from_terms(4, [((1, 1 << j), 1.0) for j in range(4)])
    (tmp_path / "star4.json").write_text(json.dumps(star4.to_json()))
    (tmp_path / "maj3.json").write_text(json.dumps(parse_poly(MAJ3, 3).to_json()))
    (tmp_path / "atoms.json").write_text(json.dumps(
        {"kind": "atoms", "atoms": [[-3 ** 0.5, 1 / 6], [0.0, 2 / 3], [3 ** 0.5, 1 / 6]]}))
    return tmp_path


# -- generators ---------------------------------------------------------------

def test_gen_is_deterministic():
    spec = InstanceSpec("random_bivariate", n=5, k=2, terms=6, seed=9)
    assert gen_instance(spec) == gen_instance(InstanceSpec(**vars(spec)))
    F, parts = gen_instance(spec)
    assert parts is None and max(side_degrees(F)) <= 2


def test_star_instances():
    for m, winner in ((3, "bvip1"), (4, "bvip2")):
        F, _ = gen_instance(InstanceSpec("crossterm_star", m=m, k=1))
        assert F.as_dict() == {(1, 1 << j): 1.0 for j in range(m)}
        assert compare_bounds(F, 12).winner == winner


def test_separable_instances_roundtrip():
    for seed in range(20):
        F, parts = gen_instance(InstanceSpec("separable", n=4, k=3, terms=3, seed=seed))
        back = decompose_separable(F)
        assert (back.f, back.g, back.h) == (parts.f, parts.g, parts.h)
        assert max(side_degrees(F)) == 3


def test_separable_majority_roundtrip():
    from bvip.bivariate import compose_separable
    maj = parse_poly(MAJ3, 3)
    back = decompose_separable(compose_separable(maj, maj, maj))
    assert (back.f, back.g, back.h) == (maj, maj, maj)


@pytest.mark.parametrize("bad", [
    dict(kind="nope"), dict(kind="random_bivariate", n=17), dict(kind="random_bivariate", k=0),
    dict(kind="random_bivariate", coeff="cauchy"), dict(kind="crossterm_star", m=0),
])
def test_gen_rejects_bad_specs(bad):
    with pytest.raises(ValueError):
        gen_instance(InstanceSpec(**bad))


# -- sweep ---------------------------------------------------------------------

def star_config(**extra):
    obj = {
        "instances": [{"kind": "crossterm_star", "m": m, "k": 1, "id": f"star{m}"}
                      for m in range(1, 9)],
        "psis": [{"kind": "power", "m": 4}],
        "dist_x": {"kind": "rademacher"},
        "lhs_method": "exact",
    }
    obj.update(extra)
    return ExperimentConfig.from_json(obj)


def test_star_sweep_flips_between_3_and_4():
    rows = run_sweep(star_config())
    assert [r["winner"] for r in rows] == ["bvip1"] * 3 + ["bvip2"] * 5
    assert all(r["all_bounds_hold"] for r in rows)
    assert [r["instance_id"] for r in rows] == [f"star{m}" for m in range(1, 9)]


def test_separable_sweep_ratio():
    cfg = ExperimentConfig.from_json({
        "instances": [{"kind": "separable", "n": 4, "k": k, "terms": 2, "coeff": "sign",
                       "seed": k, "count": 3} for k in (1, 2, 3)],
        "psis": [{"kind": "power", "m": 4}, {"kind": "cosine"}],
    })
    rows = run_sweep(cfg)
    assert len(rows) == 18
    for r in rows:
        assert r["sep_bvip1"] / r["sep_bvip2"] == 4 / 9 ** r["k"]
        assert r["all_bounds_hold"] is True


def test_sweep_csv_format():
    rows = run_sweep(star_config(psis=[{"kind": "smooth_step", "u": 0.0, "lambda": 0.5}]))
    text = rows_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0].keys()) == CSV_COLUMNS
    for raw, row in zip(parsed, rows):
        assert float(raw["bvip1"]) == row["bvip1"]  # shortest round-trip repr
        # x1*y1 is separable (h = x1); wider stars are not
        assert (raw["sep_bvip1"] == "") == (raw["instance_id"] != "star1")
        assert raw["all_bounds_hold"] == "true"


def test_sweep_rejects_invalid_distribution():
    from bvip.estimate import HypothesisError
    with pytest.raises(HypothesisError):
        run_sweep(star_config(dist_y={"kind": "atoms", "atoms": [[0, 0.5], [1, 0.5]]}))
    rows = run_sweep(star_config(dist_y={"kind": "atoms", "atoms": [[0, 0.5], [1, 0.5]]},
                                 allow_invalid=True, lhs_method="none"))
    assert rows[0]["lhs"] is None


def test_sweep_monte_carlo_rows():
    rows = run_sweep(star_config(lhs_method="monte_carlo", samples=2000, seed=4,
                                 dist_y={"kind": "gaussian"}))
    assert all(r["lhs_method"] == "monte_carlo" and r["lhs_halfwidth"] > 0 for r in rows)


# -- command line ---------------------------------------------------------------

def test_cli_bounds_star4(capsys, files):
    code, out, _ = run(capsys, "bounds", "-f", files / "star4.json", "--C", 12)
    rep = json.loads(out)
    assert code == 0 and rep["bvip2"] < rep["bvip1"] and rep["winner"] == "bvip2"


def test_cli_estimate_exact(capsys, files):
    code, out, _ = run(capsys, "estimate", "-f", files / "maj3.json", "--dist-x", "rademacher",
                       "--dist-y", files / "atoms.json", "--psi", "power4", "--method", "exact")
    res = json.loads(out)
    assert code == 0 and res["lhs"] <= res["bip"] and res["bound_holds"]


def test_cli_show_parse_error(capsys, files):
    code, _, err = run(capsys, "show", "-f", files / "bad.txt")
    assert code == 2 and "position 3" in err


def test_cli_show_and_influence(capsys, files):
    code, out, _ = run(capsys, "show", "-f", files / "maj3.txt")
    assert code == 0 and json.loads(out)["degree"] == 3
    code, out, _ = run(capsys, "influence", "-f", files / "maj3.txt", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["pivotal"] for r in rows] == ["0.5"] * 3
    code, out, _ = run(capsys, "influence", "-f", files / "star4.json")
    rows = json.loads(out)
    assert code == 0 and all(r["sigma"] == r["flat_influence"] for r in rows)


def test_cli_hybrid(capsys, files, tmp_path):
    out_path = tmp_path / "hyb.json"
    code, _, _ = run(capsys, "hybrid", "-f", files / "maj3.txt", "--psi", "cosine",
                     "-o", out_path)
    res = json.loads(out_path.read_text())
    assert code == 0 and all(s["holds"] for s in res["steps"])
    assert abs(sum(s["signed"] for s in res["steps"]) - res["total"]) <= 1e-10


def test_cli_gen_roundtrip(capsys, tmp_path):
    path = tmp_path / "inst.json"
    code, _, _ = run(capsys, "gen", "--kind", "separable", "--n", 3, "--k", 2, "--seed", 5,
                     "-o", path)
    F = BivariatePoly.from_json(json.loads(path.read_text()))
    assert code == 0 and F == gen_instance(InstanceSpec("separable", n=3, k=2, seed=5))[0]
    code, out, _ = run(capsys, "gen", "--kind", "crossterm_star", "--m", 2, "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "x,y,coeff"


def test_cli_exit_codes(capsys, files):
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "bounds")[0] == 1  # missing -f
    assert run(capsys, "estimate", "-f", files / "maj3.txt", "--dist-y",
               '{"kind":"atoms","atoms":[[0,0.5],[1,0.5]]}')[0] == 3
    assert run(capsys, "estimate", "-f", files / "maj3.txt", "--dist-y", "gaussian")[0] == 4
    assert run(capsys, "show", "-f", files / "missing.txt")[0] == 1


def test_cli_grid_cap_env(capsys, files, monkeypatch):
    monkeypatch.setenv("BVIP_GRID_CAP", "3")
    code, _, err = run(capsys, "estimate", "-f", files / "star4.json")
    assert code == 4 and "cap" in err


def test_cli_sweep_writes_identical_files(capsys, tmp_path):
    cfg = {"instances": [{"kind": "random_bivariate", "n": 3, "k": 2, "terms": 5, "seed": 1,
                          "count": 4}],
           "psis": [{"kind": "power", "m": 4}, {"kind": "cosine"}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sweep", "-c", tmp_path / "cfg.json", "--format", "csv", "-o", a)[0] == 0
    assert run(capsys, "sweep", "-c", tmp_path / "cfg.json", "--format", "csv", "-o", b,
               "--workers", 3)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 9


def test_cli_sweep_dumps_counterexamples(capsys, tmp_path):
    # E X^4 = 100 breaks the moment condition, so the bound can fail
    heavy = {"kind": "atoms", "atoms": [[-10.0, 0.005], [0.0, 0.99], [10.0, 0.005]]}
    cfg = {"instances": [{"kind": "crossterm_star", "m": 1, "k": 1, "id": "x1y1"}],
           "psis": [{"kind": "power", "m": 4}], "dist_y": heavy}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = tmp_path / "res.csv"
    assert run(capsys, "sweep", "-c", tmp_path / "cfg.json", "-o", out)[0] == 3
    code, _, err = run(capsys, "sweep", "-c", tmp_path / "cfg.json", "-o", out, "--allow-invalid")
    assert code == 4 and "counterexample" in err
    bad = json.loads((tmp_path / "res.csv.counterexample.json").read_text())
    assert bad[0]["instance_id"] == "x1y1" and bad[0]["lhs"] == 9999.0
