import json
import subprocess
import sys

import pytest
from conftest import R2

from closedchar.cli import main
from closedchar.pipeline import RunConfig

GOLDEN_KEYS = [
    "audit", "certificate", "config", "critical_points", "cross_check", "errors",
    "orbits", "profiles", "provenance", "schema_version", "status",
]
ORBIT_KEYS = [
    "S_plus", "action", "classification", "e", "i1", "label", "mean_index", "method",
    "nu1", "phi", "summary_ok", "symmetric", "tau",
]
CERT_KEYS = [
    "M_common", "T_values", "assumption", "elliptic_lower_bound", "evidence", "n",
    "nonhyperbolic_lower_bound", "notes", "orbits", "rho_n", "status", "theorem_1_1",
    "theorem_1_2", "theta_partition", "tuples",
]


def write_config(tmp_path, name="cfg.json", **kw):
    cfg = {"body": {"kind": "ellipsoid", "radii": list(R2)}, "alpha": 1.5, "method": "both",
           "solver": {"restarts": 8, "n_modes": 16}, "m_max": 32, "shift_audit_m": 2}
    cfg.update(kw)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def golden(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("golden")
    cfg = write_config(tmp)
    code = main(["run", str(cfg), "--out", str(tmp / "out")])
    return code, tmp / "out"


class TestGolden:
    def test_exit_zero(self, golden):
        assert golden[0] == 0

    def test_files(self, golden):
        out = golden[1]
        for name in ("report.json", "orbits.csv", "certificate.txt", "trajectory_y1.csv", "trajectory_y2.csv"):
            assert (out / name).is_file()

    def test_schema(self, golden):
        rep = json.loads((golden[1] / "report.json").read_text())
        assert sorted(rep) == GOLDEN_KEYS
        assert rep["schema_version"] == "1.0"
        assert sorted(rep["orbits"][0]) == ORBIT_KEYS
        assert sorted(rep["certificate"]) == CERT_KEYS
        assert sorted(rep["provenance"]) == ["config_hash", "timestamp", "versions"]
        assert all(sorted(a) == ["detail", "invariant", "slack", "verdict"] for a in rep["audit"])

    def test_content(self, golden):
        rep = json.loads((golden[1] / "report.json").read_text())
        assert rep["status"] == "PASS" and rep["errors"] == []
        assert [o["label"] for o in rep["orbits"]] == ["y1", "y2"]
        assert all(a["verdict"] == "PASS" for a in rep["audit"])
        assert all(c["verdict"] == "PASS" for c in rep["cross_check"])
        cert = rep["certificate"]
        assert cert["status"] == "PASS" and len(cert["T_values"]) >= 3
        assert cert["nonhyperbolic_lower_bound"] >= 1 and cert["elliptic_lower_bound"] == 2
        names = {a["invariant"] for a in rep["audit"]}
        assert any("i(u^m) = i(y,m) - n" in x for x in names)

    def test_certificate_text(self, golden):
        text = (golden[1] / "certificate.txt").read_text()
        assert "status: PASS" in text and "Assumption" in text


def test_determinism(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    blobs = []
    for _ in range(2):
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        rep["provenance"].pop("timestamp")
        blobs.append(json.dumps(rep, sort_keys=True))
    assert blobs[0] == blobs[1]


def test_seed_override_changes_hash(tmp_path):
    a = RunConfig.load(write_config(tmp_path))
    b = RunConfig.load(write_config(tmp_path, name="b.json", seed=7))
    assert a.hash() != b.hash()


def test_alpha_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, alpha=2.5)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "alpha must lie in (1, 2)" in capsys.readouterr().err


def test_m_max_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, m_max=8)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_console_entry(tmp_path):
    cfg = write_config(tmp_path, alpha=0.5)
    proc = subprocess.run([sys.executable, "-m", "closedchar.cli", "run", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 3 and "config rejected" in proc.stderr


def test_resonant_ellipsoid(tmp_path):
    """E(1, 1.3): 1.69 is rational, so every point lies on a closed orbit.

    Both planar circles are still found by both methods and agree, but the
    certificate is refused: the carriers y1^16900 and y2^10000 share one
    critical value, which a body with finitely many orbits cannot have.
    """
    cfg = write_config(tmp_path, body={"kind": "ellipsoid", "radii": [1.0, 1.3]})
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(rep["orbits"]) == 2
    assert all(c["verdict"] == "PASS" for c in rep["cross_check"])
    t11 = rep["certificate"]["theorem_1_1"]
    assert t11["claims"]["carriers at distinct critical values"] is False
    assert rep["certificate"]["status"] == "FAIL"
    assert code == 2
