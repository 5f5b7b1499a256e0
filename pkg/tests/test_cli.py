import csv
import json

import pytest

from scmkit.cli import EXIT_INVALID, EXIT_NONCONVERGED, EXIT_OK, main

QUICK = ["--multistart", "1", "--max-evals", "150"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    rc = main(["generate", "--units", "8", "--periods", "18", "--t0", "12", "--covariates", "3",
               "--effect", "0.1", "--seed", "7", "--out", str(out)])
    assert rc == EXIT_OK
    return out


def base_args(data, out):
    return ["--panel", str(data / "panel.csv"), "--covariates", str(data / "covariates.csv"),
            "--treated", "unit00", "--t0", "12", "--with-covariates", "--out", str(out), *QUICK]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_ground_truth(data):
    truth = json.loads((data / "ground_truth.json").read_text())
    assert truth["treated_unit"] == "unit00"
    assert truth["effect"][12:] == [0.1] * 6


def test_estimate_writes_minimal_set(data, tmp_path, capsys):
    assert main(["estimate", *base_args(data, tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["gaps.csv", "run_metadata.json", "weights.csv"]
    rows = read_csv(tmp_path / "weights.csv")
    units = [r for r in rows if r["kind"] == "unit"]
    assert len(units) == 7
    assert abs(sum(float(r["weight"]) for r in units) - 1) <= 1e-12
    assert [r["name"] for r in rows if r["kind"] == "predictor"] == ["cov1", "cov2", "cov3", "outcome_pre_mean"]
    assert "gap" in capsys.readouterr().out


def test_placebo_table_and_metadata(data, tmp_path):
    assert main(["placebo", *base_args(data, tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "placebo.csv")
    assert len(rows) == 8
    assert sorted(int(r["rank"]) for r in rows) == list(range(1, 9))
    meta = json.loads((tmp_path / "run_metadata.json").read_text())
    treated = next(r for r in rows if r["treated"] == "1")
    assert meta["placebo"]["p_value"] == float(treated["p_value"])
    assert meta["placebo"]["ranking_statistic"] == "post_mspe"


def test_specsearch_table(data, tmp_path):
    assert main(["specsearch", *base_args(data, tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "specsearch.csv")
    assert [r["specification"] for r in rows] == [f"{n}{x}" for n in range(1, 8) for x in "ab"]


def test_loo_outputs(data, tmp_path):
    assert main(["loo", *base_args(data, tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "run_metadata.json").read_text())
    omitted = meta["loo"]["omitted"]
    assert omitted and meta["loo"]["reoptimizes_v"] is True
    assert {r["omitted_unit"] for r in read_csv(tmp_path / "loo.csv")} == set(omitted)


def test_diff_outputs(data, tmp_path):
    args = base_args(data, tmp_path) + ["--panel-b", str(data / "panel.csv"), "--t0-b", "12",
                                        "--origin-a", "1", "--origin-b", "1"]
    assert main(["diff", *args]) == EXIT_OK
    diffs = read_csv(tmp_path / "diff.csv")
    assert len(diffs) == 18 and all(float(r["diff"]) == 0.0 for r in diffs)
    assert (tmp_path / "diff_placebo.csv").exists() and (tmp_path / "gaps_b.csv").exists()


def test_config_file_matches_flags(data, tmp_path):
    cfg = {
        "panel": str(data / "panel.csv"), "covariates": str(data / "covariates.csv"),
        "treated": "unit00", "t0": 12, "with_covariates": True, "out": str(tmp_path / "cfg"),
        "solver": {"multistart_count": 1, "outer_max_evaluations": 150},
    }
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    assert main(["estimate", "--config", str(tmp_path / "run.json")]) == EXIT_OK
    assert main(["estimate", *base_args(data, tmp_path / "flags")]) == EXIT_OK
    assert (tmp_path / "cfg" / "gaps.csv").read_bytes() == (tmp_path / "flags" / "gaps.csv").read_bytes()
    assert (tmp_path / "cfg" / "weights.csv").read_bytes() == (tmp_path / "flags" / "weights.csv").read_bytes()


def test_unknown_config_key_is_invalid(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"panle": "x.csv"}))
    assert main(["estimate", "--config", str(tmp_path / "bad.json")]) == EXIT_INVALID
    assert "unknown config keys: panle" in capsys.readouterr().err


def test_env_var_sets_default_output_dir(data, tmp_path, monkeypatch):
    monkeypatch.setenv("SCMKIT_OUT", str(tmp_path / "from_env"))
    args = [a for a in base_args(data, tmp_path) if a != str(tmp_path)]
    args.remove("--out")
    assert main(["estimate", *args]) == EXIT_OK
    assert (tmp_path / "from_env" / "weights.csv").exists()


def test_out_of_range_share_exits_invalid(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("unit,period,value\n" + "".join(
        f"{u},{t},{1.5 if (u, t) == ('b', 2) else 0.5}\n" for u in "abc" for t in (1, 2, 3)))
    rc = main(["estimate", "--panel", str(tmp_path / "p.csv"), "--treated", "a", "--t0", "2",
               "--outcome-kind", "share", "--out", str(tmp_path / "o")])
    assert rc == EXIT_INVALID
    assert "out of range" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_required_setting(tmp_path, capsys):
    assert main(["estimate", "--panel", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_nonconvergence_exits_2_but_writes_results(data, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"solver": {"inner_max_iterations": 1}}))
    rc = main(["estimate", "--config", str(tmp_path / "cfg.json"), "--scheme", "all_lags",
               *base_args(data, tmp_path / "o")])
    assert rc == EXIT_NONCONVERGED
    meta = json.loads((tmp_path / "o" / "run_metadata.json").read_text())
    assert meta["converged"] is False and meta["solver"]["inner_failures"] > 0
