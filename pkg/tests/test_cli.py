import csv
import json

import numpy as np
import pytest

from polyport.cli import main

from cases import FIXTURES, MV_MODEL, MV_PREF, MV_X, MVSKF_PREF

DOC_FIELDS = {"outcome", "assets", "x_star", "objective_fN", "epsilon_used", "rank_ratio",
              "raw_rank_ratio", "rounded", "tight", "relaxation_value", "duality_gap",
              "iterations", "solver_status", "d0", "attempts", "message", "timing"}


def config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def solve_doc(tmp_path, doc, capsys):
    code = main(["solve", config(tmp_path, doc)])
    return code, json.loads(capsys.readouterr().out)


def normal_spec(model):
    return {"mean": model.mean.tolist(), "covariance": model.covariance.tolist()}


# --- solve -----------------------------------------------------------------

def test_solve_four_asset_price_fixture(tmp_path, capsys):
    doc = {"degree": 5, "lambda": list(MVSKF_PREF.lam), "epsilon0": 0.01,
           "source": {"csv_prices": str(FIXTURES / "prices_721.csv")}}
    code, out = solve_doc(tmp_path, doc, capsys)
    assert code == 0
    assert set(out) == DOC_FIELDS
    assert out["outcome"] == "tight" and out["tight"] is True
    assert out["assets"] == ["LHS", "SAIC", "HISG", "CYTS"]
    x = np.array(out["x_star"])
    assert x.min() >= -1e-9 and abs(x.sum() - 1.0) <= 1e-12
    assert out["d0"] == 3 and out["timing"]["wall_time_s"] >= 0


def test_solve_analytic_normal_without_perturbation(tmp_path, capsys):
    doc = {"lambda": list(MV_PREF.lam), "epsilon0": 0,
           "source": {"analytic_normal": normal_spec(MV_MODEL)}}
    code, out = solve_doc(tmp_path, doc, capsys)
    assert code == 0
    np.testing.assert_allclose(out["x_star"], MV_X, atol=1e-3)
    assert out["epsilon_used"] == 0.0 and len(out["attempts"]) == 1


def test_solve_with_normal_draws_and_output_file(tmp_path, capsys):
    spec = normal_spec(MV_MODEL) | {"N": 200, "seed": 3}
    doc = {"lambda": list(MV_PREF.lam), "source": {"normal": spec}, "output": "res.json",
           "assets": ["a", "b", "c"]}
    code = main(["solve", config(tmp_path, doc)])
    printed = capsys.readouterr().out
    out = json.loads((tmp_path / "res.json").read_text())
    assert code == 0 and out["assets"] == ["a", "b", "c"]
    # the human summary rounds to four decimals
    assert f"{out['x_star'][0]:.4f}" in printed


def test_solve_failure_exit_code(tmp_path, capsys):
    # pure-mean loss with short selling is unbounded below at every epsilon tried
    doc = {"lambda": [1.0], "short_selling": True, "epsilon0": 1e-9, "max_doublings": 0,
           "source": {"analytic_normal": normal_spec(MV_MODEL)}}
    code, out = solve_doc(tmp_path, doc, capsys)
    assert code == 1
    assert set(out) == DOC_FIELDS
    assert out["outcome"] == "failed" and out["x_star"] is None and out["message"]


def test_solve_is_bit_identical(tmp_path, capsys):
    doc = {"lambda": [0.4, 0.3, 0.3], "source": {"csv_prices": str(FIXTURES / "prices_501.csv")}}
    _, a = solve_doc(tmp_path, doc, capsys)
    _, b = solve_doc(tmp_path, doc, capsys)
    a.pop("timing"), b.pop("timing")
    assert a == b


@pytest.mark.parametrize("doc, field", [
    ({"lambda": [0.5, 0.4], "source": {"analytic_normal": normal_spec(MV_MODEL)}}, "lambda"),
    ({"lambda": [1.0], "colour": "red", "source": {"analytic_normal": normal_spec(MV_MODEL)}}, "colour"),
    ({"lambda": [1.0]}, "source"),
    ({"lambda": [1.0], "source": {"analytic_normal": normal_spec(MV_MODEL),
                                   "csv_prices": "x.csv"}}, "source"),
    ({"lambda": [1.0], "solver": {"gap_tol": -1}, "source": {"analytic_normal": normal_spec(MV_MODEL)}},
     "solver"),
    ({"lambda": [1.0], "epsilon0": -0.1, "source": {"analytic_normal": normal_spec(MV_MODEL)}}, "epsilon0"),
])
def test_solve_config_errors(tmp_path, capsys, doc, field):
    assert main(["solve", config(tmp_path, doc)]) == 64
    assert field in capsys.readouterr().err


def test_solve_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["solve", str(path)]) == 64


def test_solve_unreadable_inputs(tmp_path):
    assert main(["solve", str(tmp_path / "none.json")]) == 66
    (tmp_path / "p.csv").write_text("date,a,b\n")
    doc = {"lambda": [1.0], "source": {"csv_prices": "p.csv"}}
    assert main(["solve", config(tmp_path, doc)]) == 66


def test_usage_errors():
    assert main([]) == 64
    assert main(["frobnicate"]) == 64


# --- ingest ----------------------------------------------------------------

def test_ingest_two_rows(tmp_path):
    (tmp_path / "p.csv").write_text("date,a,b\n2020-01-06,10,5\n2020-01-13,11,5\n")
    assert main(["ingest", str(tmp_path / "p.csv"), str(tmp_path / "r.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["date", "a", "b"]
    assert len(rows) == 2 and rows[1][0] == "2020-01-13"
    assert float(rows[1][1]) == pytest.approx(0.1, abs=1e-15) and float(rows[1][2]) == 0.0


def test_ingest_header_only(tmp_path):
    (tmp_path / "p.csv").write_text("date,a,b\n")
    assert main(["ingest", str(tmp_path / "p.csv"), str(tmp_path / "r.csv")]) == 66


def test_ingest_reports_line_number(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("date,a,b\n2020-01-06,10,5\n2020-01-13,eleven,5\n")
    assert main(["ingest", str(tmp_path / "p.csv"), str(tmp_path / "r.csv")]) == 66
    assert ":3:" in capsys.readouterr().err


def test_ingest_full_fixture_and_feed_back(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["ingest", str(FIXTURES / "prices_501.csv"), str(out)]) == 0
    assert len(out.read_text().splitlines()) == 501
    scatter = (tmp_path / "r_scatter.csv").read_text().splitlines()
    assert scatter[0] == "asset,week,return" and len(scatter) == 1 + 4 * 500
    capsys.readouterr()
    doc = {"lambda": [0.5, 0.5], "source": {"csv_returns": "r.csv"}}
    code, res = solve_doc(tmp_path, doc, capsys)
    assert code == 0 and len(res["x_star"]) == 4


# --- study -----------------------------------------------------------------

def study_config(tmp_path, **over):
    doc = {"model": normal_spec(MV_MODEL), "lambda": list(MV_PREF.lam), "N_grid": [50, 5000],
           "replications": 3, "base_seed": 5, "output": "study.csv"}
    doc.update(over)
    return config(tmp_path, doc, "study.json")


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_study_writes_csv(tmp_path, capsys):
    assert main(["study", study_config(tmp_path)]) == 0
    rows = read_rows(tmp_path / "study.csv")
    assert list(rows[0]) == ["N", "replication", "epsilon", "distance", "objective_gap", "tight"]
    assert len(rows) == 6
    med = {N: np.median([float(r["distance"]) for r in rows if r["N"] == N]) for N in ("50", "5000")}
    assert med["5000"] < med["50"]


def test_study_single_degenerate_cell(tmp_path, capsys):
    model = {"mean": [0.9, 0.6, 0.4], "covariance": np.zeros((3, 3)).tolist()}
    assert main(["study", study_config(tmp_path, model=model, N_grid=[10], replications=1)]) == 0
    rows = read_rows(tmp_path / "study.csv")
    assert len(rows) == 1 and float(rows[0]["distance"]) <= 1e-6


def test_study_is_reproducible(tmp_path, capsys):
    path = study_config(tmp_path, N_grid=[30], replications=2)
    main(["study", path])
    first = (tmp_path / "study.csv").read_bytes()
    main(["study", path])
    assert (tmp_path / "study.csv").read_bytes() == first


@pytest.mark.parametrize("over", [{"N_grid": []}, {"N_grid": [100, 10]}, {"replications": 0},
                                  {"epsilon0": 0}, {"reference": [0.5, 0.5]}, {"extra": 1}])
def test_study_config_errors(tmp_path, over):
    assert main(["study", study_config(tmp_path, **over)]) == 64
