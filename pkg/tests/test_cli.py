import json
import math
import subprocess
import sys

import pytest

from ebm_bridge import SampleSet
from ebm_bridge.cli import main

SQRT_2PI = math.sqrt(2 * math.pi)


def write_config(tmp_path, **kw):
    cfg = dict(sigma_grid=[0.5, 2.0], splits=[[4, 4]], estimators=["opt-bridge", "mis"], replications=6, chunk_size=3)
    cfg.update(kw)
    cfg = {k: v for k, v in cfg.items() if v is not None}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_list_estimators(capsys):
    assert main(["--list-estimators"]) == 0
    out = capsys.readouterr().out
    assert "opt-bridge" in out and "nce-log" in out


def test_missing_subcommand():
    assert main([]) == 2


def test_z_sweep_writes_csv(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["z-sweep", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 2 * 2
    assert (tmp_path / "z.csv.meta.json").exists()


def test_cli_overrides_config(tmp_path):
    out = tmp_path / "z.csv"
    args = ["z-sweep", "--config", write_config(tmp_path), "--out", str(out), "--replications", "3",
            "--scenario", "ideal", "--methods", "geo"]
    assert main(args) == 0
    rows = out.read_text().splitlines()[1:]
    assert all(r.startswith("geo,") and ",ideal,3," in r for r in rows)


@pytest.mark.parametrize(
    "cfg",
    [dict(estimators=["opt-bridge", "bogus"]), dict(scenario="tropical"), dict(replications=0), dict(colour="red")],
)
def test_z_sweep_usage_errors(tmp_path, cfg):
    out = tmp_path / "z.csv"
    assert main(["z-sweep", "--config", write_config(tmp_path, **cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_unreadable_config(tmp_path):
    assert main(["z-sweep", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.csv")]) == 2


def test_unwritable_output(tmp_path):
    assert main(["z-sweep", "--config", write_config(tmp_path), "--out", str(tmp_path / "no" / "o.csv")]) == 3


def test_theta_sweep(tmp_path):
    out = tmp_path / "t.csv"
    path = write_config(tmp_path, estimators=None, costs=["ml", "nce-log"], splits=[[5, 5]])
    assert main(["theta-sweep", "--config", path, "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 4 and all(",none," in r for r in rows)


def test_estimate_z(tmp_path, capsys):
    data = tmp_path / "s.csv"
    SampleSet([0.1, -0.4, 0.9], [1.5, -2.2]).to_csv(data)
    assert main(["estimate-z", "--estimator", "opt-bridge", "--data", str(data), "--sigma-p", "2"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["Z_hat"] == pytest.approx(2.672105875375154, rel=1e-9) and res["converged"]
    assert main(["estimate-z", "--estimator", "mis", "--data", str(data), "--sigma-p", "2", "--z0", "1",
                 "--iters", "1", "--fixed"]) == 0
    assert json.loads(capsys.readouterr().out)["Z_hat"] == pytest.approx(1.3067104598251402, rel=1e-14)
    assert main(["estimate-z", "--estimator", "stand-is", "--data", str(data), "--sigma-p", "2"]) == 0
    assert main(["estimate-z", "--estimator", "geo", "--data", str(data), "--sigma-p", "2"]) == 0
    assert "Z_bad" in json.loads(capsys.readouterr().out.splitlines()[-1])


def test_estimate_z_umbrella(tmp_path, capsys):
    data = tmp_path / "u.csv"
    data.write_text("label,value\numbrella,0.3\numbrella,2.5\n")
    assert main(["estimate-z", "--estimator", "opt-umbrella", "--data", str(data), "--sigma-p", "2", "--z0", "10"]) == 0
    assert json.loads(capsys.readouterr().out)["Z_hat"] == pytest.approx(3.3135308208582893, rel=1e-14)


def test_estimate_z_singular_is_failure(tmp_path):
    data = tmp_path / "u.csv"
    data.write_text("label,value\numbrella,0.0\n")
    # one draw with sigma_p = 1: phi/q = sqrt(2 pi) is reached after one step
    assert main(["estimate-z", "--estimator", "opt-umbrella", "--data", str(data), "--sigma-p", "1"]) == 3


def test_estimate_z_usage(tmp_path):
    data = tmp_path / "s.csv"
    SampleSet([0.1], [1.5]).to_csv(data)
    assert main(["estimate-z", "--estimator", "nope", "--data", str(data), "--sigma-p", "2"]) == 2
    assert main(["estimate-z", "--estimator", "mis", "--data", str(data), "--sigma-p", "-1"]) == 2
    assert main(["estimate-z", "--estimator", "mis", "--data", str(data), "--sigma-p", "1", "--fixed"]) == 2
    assert main(["estimate-z", "--estimator", "opt-umbrella", "--data", str(data), "--sigma-p", "2"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["estimate-z", "--estimator", "mis", "--data", str(bad), "--sigma-p", "2"]) == 2


def test_selftest_subprocess():
    proc = subprocess.run([sys.executable, "-m", "ebm_bridge", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") >= 6
