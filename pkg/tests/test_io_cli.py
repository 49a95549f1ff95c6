import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from reglab.cli import run_command
from reglab.domain import build_domain
from reglab.errors import ValidationError
from reglab.instances import InstanceConfig, generate_instance
from reglab.io import (MAGIC, parse_config, read_csv, read_grid, write_csv, write_grid,
                       write_json)
from reglab.maximal_ops import maximal
from reglab.solver import gradient

CFG = """
[domain]
shape = square(1)
[operator]
p = {p}
[data]
kind = {kind}
seed = 3
seeds = 0 1
[grids]
alpha = 0 0.5
q = 1 2
s = 1 inf
resolutions = 16
"""


def write_cfg(tmp_path, p=2.0, kind="manufactured", extra=""):
    path = tmp_path / "c.cfg"
    path.write_text(CFG.format(p=p, kind=kind) + extra)
    return path


@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=3, max_side=6)),
       st.floats(1e-6, 10))
def test_grid_roundtrip(tmp_path_factory, vals, h):
    path = tmp_path_factory.mktemp("g") / "x.grid"
    write_grid(path, vals, h)
    back, h2 = read_grid(path)
    assert h2 == h and back.shape == vals.shape
    assert back.tobytes() == np.ascontiguousarray(vals).tobytes()


def test_grid_layout(tmp_path):
    path = tmp_path / "x.grid"
    write_grid(path, np.arange(6.0).reshape(2, 3), 0.5)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"RGL1"
    n, d0, d1, h = struct.unpack("<qqqd", raw[4:36])
    assert (n, d0, d1, h) == (2, 2, 3, 0.5)
    assert np.array_equal(np.frombuffer(raw[36:], "<f8"), np.arange(6.0))


@pytest.mark.parametrize("mangle", [lambda b: b"XXXX" + b[4:], lambda b: b[:-8], lambda b: b[:10]])
def test_grid_corrupt(tmp_path, mangle):
    path = tmp_path / "x.grid"
    write_grid(path, np.ones((3, 3)), 0.1)
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(ValidationError):
        read_grid(path)


def test_csv_and_json(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b", "c"], [[0.1, True, math.inf], [1 / 3, False, 2]])
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "c"]
    assert rows[0] == ["0.1", "1", "inf"] and float(rows[1][0]) == 1 / 3
    write_json(tmp_path / "s.json", dict(x=math.nan, y=np.float64(2.5), z=[np.int64(3)]))
    assert json.loads((tmp_path / "s.json").read_text()) == dict(x="nan", y=2.5, z=[3])


def test_parse_config():
    cfg = parse_config(CFG.format(p=1.5, kind="fourier"))
    assert cfg.p == 1.5 and cfg.seeds == (0, 1) and cfg.alpha == (0.0, 0.5)
    assert cfg.s == (1.0, math.inf) and cfg.resolutions == (16,)
    assert cfg.operator.p == 1.5


@pytest.mark.parametrize("text, key", [
    (CFG.format(p=0.5, kind="fourier"), "operator.p"),
    (CFG.format(p=2, kind="fourier") + "[solver]\ntol = 0\n", "solver.tol"),
    (CFG.format(p=2, kind="wavelet"), "data.kind"),
    (CFG.format(p=2, kind="fourier").replace("resolutions = 16", "resolutions = 32 16"), "grids.resolutions"),
    (CFG.format(p=2, kind="fourier").replace("alpha = 0 0.5", "alpha = 2"), "grids.alpha"),
    (CFG.format(p=2, kind="fourier") + "[output]\nfolder = x\n", "output.folder"),
    (CFG.format(p=2, kind="fourier").replace("shape = square(1)", "shape = blob(1)"), "domain.shape"),
    ("[operator]\np = 2\n", "domain.shape"),
])
def test_config_errors_name_key(text, key):
    with pytest.raises(ValidationError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_generate_instance_examples():
    dom = build_domain("L-shape(1)", 1 / 16)
    F1, s1 = generate_instance(None, 2**63 + 5, dom)
    F2, s2 = generate_instance(None, 2**63 + 5, dom)
    assert F1.values.tobytes() == F2.values.tobytes() and s1.values.tobytes() == s2.values.tobytes()
    F0, s0 = generate_instance(InstanceConfig(amplitude=0.0), 0, dom)
    assert not F0.values.any() and not s0.values.any()
    F, s = generate_instance(None, 1, dom)
    mask = dom.interior_mask
    assert np.sum(F.norm()[mask] ** 2) + np.sum(gradient(s).norm()[mask] ** 2) > 0
    assert not F.values[~mask].any()


def test_cli_solve(tmp_path):
    out = tmp_path / "run"
    assert run_command(["solve", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == 0
    u, h = read_grid(out / "u.grid")
    assert u.shape == (17, 17) and h == 1 / 16
    header, rows = read_csv(out / "convergence.csv")
    assert header == ["step", "energy", "residual", "delta"] and rows
    summary = json.loads((out / "summary.json").read_text())
    assert summary["h1_error"] < 0.01 and summary["residual"] <= 1e-8


def test_cli_usage_errors(tmp_path, capsys):
    assert run_command(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run_command([]) == 1
    assert run_command(["solve", "--config", "x", "--out", str(tmp_path), "--bogus"]) == 1
    assert run_command(["solve", "--config", str(write_cfg(tmp_path, p=0.5)), "--out", str(tmp_path)]) == 1
    assert "operator.p" in capsys.readouterr().err
    assert run_command(["solve", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1


def test_cli_maximal_and_lorentz(tmp_path):
    f = np.zeros((16, 16))
    f[4:7, 9:12] = 2.0
    write_grid(tmp_path / "f.grid", f, 1 / 16)
    assert run_command(["maximal", "--input", str(tmp_path / "f.grid"), "--out", str(tmp_path / "m")]) == 0
    M, _ = read_grid(tmp_path / "m" / "maximal.grid")
    assert np.array_equal(M, maximal(f, 1 / 16))
    assert run_command(["maximal", "--input", str(tmp_path / "f.grid"), "--out", str(tmp_path / "m"),
                        "--mode", "tail"]) == 1
    assert run_command(["lorentz", "--input", str(tmp_path / "f.grid"), "--out", str(tmp_path / "l"),
                        "--q", "2", "--s", "2", "inf"]) == 0
    _, rows = read_csv(tmp_path / "l" / "lorentz.csv")
    assert float(rows[0][2]) == pytest.approx(math.sqrt(4 * 9 / 256))


def test_cli_capacity(tmp_path):
    assert run_command(["capacity", "--out", str(tmp_path), "--ball", "1.0", "--h", "0.0625"]) == 0
    _, rows = read_csv(tmp_path / "capacity.csv")
    assert 9.0 < float(rows[0][3]) < 10.0
    assert run_command(["capacity", "--out", str(tmp_path / "c"), "--h", "0.0625", "--samples", "5"]) == 0
    assert json.loads((tmp_path / "c" / "summary.json").read_text())["passed"] is True


def test_cli_goodlambda_audit_report(tmp_path):
    cfg = write_cfg(tmp_path, kind="fourier")
    out = tmp_path / "res"
    assert run_command(["goodlambda", "--config", str(cfg), "--out", str(out / "gl")]) == 0
    summary = json.loads((out / "gl" / "summary.json").read_text())
    assert len(summary["runs"]) == 2 * 3
    assert all(sum(r["violations"].values()) == 0 for r in summary["runs"])
    header, rows = read_csv(out / "gl" / "norms.csv")
    assert len(rows) == 2 * 2 * 2 * 2
    assert run_command(["audit", "--config", str(cfg), "--out", str(out / "au"), "--strict"]) == 0
    _, comp = read_csv(out / "au" / "comparison.csv")
    assert len(comp) == 70
    assert run_command(["report", "--dir", str(out)]) == 0
    assert (out / "report.txt").read_text().count("\n") == 2


def test_cli_deterministic_csv(tmp_path):
    cfg = write_cfg(tmp_path, kind="fourier")
    for run in ("a", "b"):
        assert run_command(["solve", "--config", str(cfg), "--out", str(tmp_path / run)]) == 0
    for name in ("convergence.csv", "u.grid", "F.grid", "sigma.grid"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
