import json

import numpy as np
import pytest

from dfrto.cli import main
from dfrto.process import PlantParams, ProcessSpec, flux


def run(args):
    return main(args)


def test_simulate_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    rc = run(["simulate", "--case", "limiting_flux", "--strategy", "nominal",
              "--seed", "3", "--out", str(out)])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["feasible"] is True
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "t,c1,c2,V,u,q"
    last = [float(x) for x in lines[-1].split(",")]
    assert last[1] == pytest.approx(150.0, rel=1e-6)
    assert last[2] == pytest.approx(0.05, rel=1e-6)


def test_simulate_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        rc = run(["simulate", "--case", "generalized", "--strategy", "adaptive",
                  "--seed", "7", "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_estimate_roundtrip(tmp_path, capsys):
    # synthesize a measurement file from a known plant
    p = PlantParams(20.7233, 3.0, 0.3)
    rng = np.random.default_rng(2)
    spec = ProcessSpec()
    lines = ["t,q_m,c1,c2"]
    for i, c1 in enumerate(np.linspace(50.0, 220.0, 300)):
        q = flux(c1, 50.0, p) + rng.uniform(-spec.sigma, spec.sigma)
        lines.append(f"{i / 3600.0},{q},{c1},50.0")
    src = tmp_path / "meas.csv"
    src.write_text("\n".join(lines) + "\n")
    out = tmp_path / "boxes.csv"
    rc = run(["estimate", "--input", str(src), "--out", str(out),
              "--case", "generalized"])
    assert rc == 0
    rows = out.read_text().strip().split("\n")
    assert rows[0] == "t,p1_lo,p1_hi,p2_lo,p2_hi,p3_lo,p3_hi"
    assert len(rows) == 301
    last = [float(x) for x in rows[-1].split(",")]
    assert last[1] <= p.p1 <= last[2]
    assert last[3] <= p.p2 <= last[4]
    assert last[5] <= p.p3 <= last[6]
    # nesting along the stream
    first = [float(x) for x in rows[1].split(",")]
    assert first[1] <= last[1] and last[2] <= first[2]


def test_estimate_model_invalidated(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("t,q_m,c1,c2\n0,5.0,50,50\n1,9.0,50,50\n")
    out = tmp_path / "boxes.csv"
    rc = run(["estimate", "--input", str(src), "--out", str(out),
              "--case", "limiting_flux"])
    assert rc == 3


def test_reach_json(tmp_path, capsys):
    out = tmp_path / "w.json"
    rc = run(["reach", "--case", "limiting_flux", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    payload = json.loads(out.read_text())
    assert set(payload) == {"t1", "t2", "tf", "us"}
    assert payload["us"] == [1.0, 1.0]
    box = tmp_path / "box.json"
    box.write_text(json.dumps({"lo": [20.7233, 3.0, 0.0], "hi": [20.7233, 3.0, 0.0]}))
    rc = run(["reach", "--box", str(box), "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    payload = json.loads(out.read_text())
    assert payload["t1"][1] - payload["t1"][0] <= 2e-6


def test_montecarlo_and_summarize(tmp_path, capsys):
    out = tmp_path / "mc.csv"
    rc = run(["montecarlo", "--n", "2", "--seed", "4", "--case", "limiting_flux",
              "--strategies", "optimal,nominal", "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    stats_out = tmp_path / "stats.csv"
    rc = run(["summarize", "--input", str(out), "--out", str(stats_out)])
    assert rc == 0
    table = capsys.readouterr().out
    assert "optimal" in table and "nominal" in table
    assert stats_out.read_text().startswith("strategy,metric,")


def test_montecarlo_byte_identical(tmp_path):
    blobs = []
    for name in ("m1.csv", "m2.csv"):
        out = tmp_path / name
        rc = run(["montecarlo", "--n", "2", "--seed", "8", "--case", "generalized",
                  "--strategies", "optimal,adaptive", "--out", str(out)])
        assert rc == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "spec.json"
    bad.write_text(json.dumps({"c1_f": 10.0}))
    rc = run(["simulate", "--case", "limiting_flux", "--config", str(bad)])
    assert rc == 2


def test_timeout_exit_code(tmp_path):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"t_max": 3.0}))
    # the nominal batch takes ~8 h, so a 3 h cap forces a timeout
    rc = run(["simulate", "--case", "limiting_flux", "--strategy", "nominal",
              "--seed", "1", "--config", str(cfg)])
    assert rc == 4
