import csv
import json
import math
import subprocess
import sys

import pytest

from graphon_ldp.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, command, cfg, out="out", threads=1):
    code = main([command, "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / out),
                 "--threads", str(threads)])
    return code, tmp_path / out


def test_norms_tight_pair_row(tmp_path):
    code, out = run(tmp_path, "norms", {"seed": 0})
    assert code == EXIT_OK
    row = read_csv(out / "norms.csv")[0]
    assert row["pair"] == "tight_pair"
    assert float(row["cut_exact"]) == 0.25
    assert float(row["inf_one_exact"]) == 1.0
    assert float(row["ratio"]) == 4.0


def test_rate_with_equal_arguments_is_zero(tmp_path):
    cfg = {"seed": 0, "n": 4, "ldp": {"W": "product", "target": "product"}}
    code, out = run(tmp_path, "rate", cfg)
    assert code == EXIT_OK
    rows = {r["functional"]: float(r["value"]) for r in read_csv(out / "rate.csv")}
    assert rows == {"upsilon": 0.0, "quotient": 0.0, "sparse": 0.0}


def test_ldp_mc_point_event(tmp_path):
    cfg = {"seed": 6, "resolutions": [2], "replicas": 10_000,
           "ldp": {"W": "constant:0.5", "target": "constant:1", "delta": 0.0}}
    code, out = run(tmp_path, "ldp-mc", cfg)
    assert code == EXIT_OK
    row = read_csv(out / "ldp_mc.csv")[0]
    assert float(row["exact"]) == 0.0625
    assert abs(float(row["p_hat"]) - 0.0625) <= max(3 * float(row["std_err"]), 1e-15)
    assert (out / "ldp_mc.svg").exists()


def test_manifest_and_byte_identical_rerun(tmp_path):
    cfg = {"command": "lln", "kernel": "product", "resolutions": [8, 16], "seeds": 3, "seed": 12,
           "norm": {"restarts": 4, "seed": 1}}
    _, first = run(tmp_path, "lln", cfg, out="a")
    _, second = run(tmp_path, "lln", cfg, out="b", threads=3)
    assert (first / "lln.csv").read_bytes() == (second / "lln.csv").read_bytes()
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["config"] == cfg
    assert manifest["seeds"] == {"seed": 12, "norm.seed": 1}
    assert manifest["version"].startswith("0.1.0")
    assert "lln.csv" in manifest["outputs"] and "lln.svg" in manifest["outputs"]


def test_rerun_from_manifest_reproduces_outputs(tmp_path):
    cfg = {"seed": 4, "count": 2, "k": 8}
    _, first = run(tmp_path, "staircase", cfg, out="a")
    manifest = json.loads((first / "manifest.json").read_text())
    _, second = run(tmp_path, "staircase", manifest["config"], out="b")
    for name in manifest["outputs"]:
        if name.endswith(".csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.parametrize("command,cfg,artifact", [
    ("sample", {"seed": 1, "kernel": "er:0.3", "resolutions": [4], "seeds": 2, "alpha_exponent": 0.4},
     "graph_n4_r1.csv"),
    ("sparse-lln", {"seed": 1, "kernel": "product", "resolutions": [8, 16], "seeds": 2}, "sparse_lln.csv"),
    ("simulate", {"seed": 1, "kernel": "product", "resolutions": [8],
                  "dynamics": {"coupling": {"f": "zero", "D": "kuramoto"}, "T": 0.25, "dt": 0.0078125}},
     "trajectory_n8.csv"),
    ("continuum", {"seed": 1, "kernel": "product", "resolutions": [8, 16], "seeds": 2, "reference": 32,
                   "dynamics": {"T": 0.25, "save_every": 4}}, "continuum.csv"),
    ("continuity", {"seed": 1, "n": 32, "pairs": 2, "batches": 2, "dynamics": {"T": 0.25}},
     "continuity_summary.csv"),
    ("dynrate", {"seed": 1, "kernel": "constant:0.5", "n": 4, "initial": "scaled:0.4",
                 "dynamics": {"coupling": {"f": "zero", "D": "linear"}, "T": 0.5, "dt": 0.05},
                 "ldp": {"target_level": 0.1, "resolution": 2, "lambdas": [1, 10], "iterations": 2,
                         "observable": "terminal_l2"}}, "dynrate.csv"),
])
def test_every_subcommand_runs(tmp_path, command, cfg, artifact):
    code, out = run(tmp_path, command, cfg)
    assert code == EXIT_OK
    assert (out / artifact).exists()
    assert (out / "manifest.json").exists()


def test_file_kernel_and_missing_file(tmp_path):
    (tmp_path / "w.csv").write_text("graphon,n,2,bound,1.0\n0.1,0.2\n0.3,0.4\n")
    cfg = {"seed": 1, "kernel": str(tmp_path / "w.csv"), "resolutions": [2, 4], "seeds": 1}
    assert run(tmp_path, "sample", cfg)[0] == EXIT_OK
    cfg["kernel"] = str(tmp_path / "absent.csv")
    assert run(tmp_path, "sample", cfg)[0] == EXIT_MISSING


def test_exit_codes(tmp_path):
    assert main(["norms", "--config", str(tmp_path / "nope.json")]) == EXIT_MISSING
    assert main(["frobnicate", "--config", "x.json"]) == EXIT_USAGE
    assert main(["norms"]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["norms", "--config", str(bad)]) == EXIT_CONFIG
    assert run(tmp_path, "lln", {"seed": 1, "kernel": "product", "resolutions": [16, 8], "seeds": 1})[0] == EXIT_CONFIG
    assert run(tmp_path, "lln", {"kernel": "product", "resolutions": [8], "seeds": 1})[0] == EXIT_CONFIG
    assert run(tmp_path, "norms", {"seed": 0, "command": "lln"})[0] == EXIT_CONFIG
    unstable = {"seed": 1, "kernel": "product", "resolutions": [4],
                "dynamics": {"coupling": {"D": "kuramoto"}, "T": 1.0, "dt": 0.5}}
    assert run(tmp_path, "simulate", unstable)[0] == EXIT_NUMERIC
    typo = dict(unstable, dynamics={"coupling": {"D": "kuramoto"}, "T": 1.0, "dt": 0.0078125, "D": "linear"})
    assert run(tmp_path, "simulate", typo)[0] == EXIT_CONFIG


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHON_LDP_OUT", str(tmp_path / "env_out"))
    cfg = write_config(tmp_path, {"seed": 0, "output": str(tmp_path / "cfg_out")})
    assert main(["norms", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "env_out" / "norms.csv").exists()
    assert not (tmp_path / "cfg_out").exists()
    assert main(["norms", "--config", cfg, "--out", str(tmp_path / "flag_out")]) == EXIT_OK
    assert (tmp_path / "flag_out" / "norms.csv").exists()


def test_console_script(tmp_path):
    cfg = write_config(tmp_path, {"seed": 0, "n": 2, "ldp": {"W": "constant:0.5", "target": "constant:1"}})
    proc = subprocess.run([sys.executable, "-m", "graphon_ldp.cli", "rate", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rows = {r["functional"]: float(r["value"]) for r in read_csv(tmp_path / "o" / "rate.csv")}
    assert rows["upsilon"] == pytest.approx(math.log(2), abs=1e-15)
