import json
import os

import pytest

from kscontrol.cli import main as cli_main
from kscontrol.config import ConfigError, parse_config_dict
from kscontrol.runner import run_scenario
from kscontrol.serialize import hash_dir


def base_domain(**over):
    d = {"a": "pi", "nu": 0, "cross_section": {"box": ["pi"]}, "K_x": 16, "J_y": 8}
    d.update(over)
    return d


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_minimal_spectrum_config_defaults():
    sc = parse_config_dict({"task": "spectrum", "domain": base_domain()})
    assert sc.spec.K_x == 16
    assert sc.seed == 0
    assert sc.output_dir == "runs"


def test_rational_nu_critical_surfaced_at_parse():
    sc = parse_config_dict({
        "task": "control-1d",
        "domain": base_domain(nu="7/1"),
        "control_1d": {"T": 1.0, "u0_modes": {"1": 1.0}},
    })
    assert sc.params["critical_verdict"] == "critical"


def test_unknown_field_rejected_with_path():
    with pytest.raises(ConfigError) as exc:
        parse_config_dict({"task": "spectrum", "domain": base_domain(bogus=1)})
    assert "domain.bogus" in str(exc.value)


def test_unknown_task_rejected():
    with pytest.raises(ConfigError):
        parse_config_dict({"task": "fly-to-the-moon", "domain": base_domain()})


def test_bad_mode_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_dict({
            "task": "control-nd",
            "domain": base_domain(),
            "control_nd": {"T": 1.0, "u0_modes": {"1": 1.0}},
        })
    assert "u0_modes" in str(exc.value)


def test_point_spec_parsing():
    sc = parse_config_dict({
        "task": "minimal-time",
        "domain": base_domain(),
        "minimal_time": {"point": {"algebraic": [1, 2, -1], "root_index": 0}},
    })
    assert sc.params["point"].kind == "algebraic"


# ---------------------------------------------------------------------------
# runner + artifacts
# ---------------------------------------------------------------------------

def test_spectrum_task_artifacts(tmp_path):
    sc = parse_config_dict({"task": "spectrum", "domain": base_domain(J_y=6)})
    manifest, run_dir = run_scenario(sc, out_dir=str(tmp_path))
    assert manifest["status"] == "ok"
    assert manifest["verdict"]["kind"] == "clear"
    assert os.path.exists(os.path.join(run_dir, "modes.csv"))
    assert os.path.exists(os.path.join(run_dir, "cross_section.csv"))
    assert os.path.exists(os.path.join(run_dir, "timings.json"))


def test_control_1d_task_meets_criterion(tmp_path):
    sc = parse_config_dict({
        "task": "control-1d",
        "domain": base_domain(),
        "control_1d": {"j": 1, "T": 1.0, "K_trunc": 8, "u0_modes": {"1": 1.0}},
    })
    manifest, run_dir = run_scenario(sc, out_dir=str(tmp_path))
    assert manifest["report"]["final_rel_enforced"] <= 1e-6
    assert manifest["report"]["moment_residual_max"] <= 1e-8
    assert os.path.exists(os.path.join(run_dir, "control.csv"))
    assert os.path.exists(os.path.join(run_dir, "trace.csv"))


def test_critical_parameter_exit_code(tmp_path):
    sc = parse_config_dict({
        "task": "control-1d",
        "domain": base_domain(nu="7/1"),
        "control_1d": {"T": 1.0, "u0_modes": {"1": 1.0}},
    })
    from kscontrol.errors import CriticalParameter

    with pytest.raises(CriticalParameter) as exc:
        run_scenario(sc, out_dir=str(tmp_path))
    assert exc.value.exit_code == 3
    # partial outputs flushed: the manifest records the error
    run_dirs = [d for d in os.listdir(tmp_path) if d.startswith("run-")]
    manifest = json.load(open(os.path.join(tmp_path, run_dirs[0], "manifest.json")))
    assert manifest["status"] == "error"
    assert manifest["error"]["exit_code"] == 3


def test_below_minimal_time_writes_witness(tmp_path):
    sc = parse_config_dict({
        "task": "control-point",
        "domain": base_domain(),
        "control_point": {
            "j": 1, "T": 0.5, "K_trunc": 8, "u0_modes": {"1": 1.0},
            "point": {"liouville": "quartic_anchor3", "depth": 6},
        },
    })
    from kscontrol.errors import BelowMinimalTime

    with pytest.raises(BelowMinimalTime):
        run_scenario(sc, out_dir=str(tmp_path))
    run_dirs = [d for d in os.listdir(tmp_path) if d.startswith("run-")]
    witness = json.load(open(os.path.join(tmp_path, run_dirs[0], "witness.json")))
    assert 3 in witness["k"]


def test_simulate_free_decay_rates(tmp_path):
    sc = parse_config_dict({
        "task": "simulate",
        "domain": base_domain(),
        "simulate": {"T": 0.5, "j": 1, "u0_modes": {"2": 1.0}},
    })
    manifest, run_dir = run_scenario(sc, out_dir=str(tmp_path))
    import math

    lam2 = sc.spec.x_eigenvalue(2, 1)
    expect = math.exp(lam2 * 0.5)
    assert manifest["free_decay"]["final_norm"] == pytest.approx(expect, rel=1e-10)
    assert manifest["free_decay"]["slowest_active_rate"] == pytest.approx(lam2)


def test_determinism_bit_identical_artifacts(tmp_path):
    cfg = {
        "task": "control-nd",
        "seed": 77,
        "domain": base_domain(K_x=6, J_y=6),
        "control_nd": {"T": 1.0, "beta": 4, "u0_modes": {"1,1": 1.0, "2,3": -0.5}},
    }
    h = []
    for sub in ("r1", "r2"):
        sc = parse_config_dict(cfg)
        _, run_dir = run_scenario(sc, out_dir=str(tmp_path / sub))
        d = hash_dir(run_dir)
        d.pop("timings.json")  # the documented non-deterministic sidecar
        h.append(d)
    assert h[0] == h[1]


def test_cli_end_to_end(tmp_path):
    cfg = {
        "task": "biortho",
        "domain": base_domain(),
        "biortho": {"j": 1, "K": 8, "T": 0.5},
        "output": {"dir": str(tmp_path)},
    }
    cfg_path = tmp_path / "b.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = cli_main(["biortho", "--config", str(cfg_path)])
    assert rc == 0


def test_cli_task_mismatch(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"task": "spectrum", "domain": base_domain()}))
    rc = cli_main(["biortho", "--config", str(cfg_path)])
    assert rc == 2


def test_cli_critical_exit_code(tmp_path):
    cfg = {
        "task": "control-1d",
        "domain": base_domain(nu="7/1"),
        "control_1d": {"T": 1.0, "u0_modes": {"1": 1.0}},
        "output": {"dir": str(tmp_path)},
    }
    cfg_path = tmp_path / "crit.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = cli_main(["control-1d", "--config", str(cfg_path)])
    assert rc == 3


def test_external_file_config_end_to_end(tmp_path):
    mu_file = tmp_path / "mu.txt"
    mu_file.write_text("# external cross-section spectrum\n1.0\n4.0\n9.0\n16.0\n")
    cfg = {
        "task": "spectrum",
        "domain": {
            "a": "pi", "nu": 0,
            "cross_section": {"external_file": str(mu_file)},
            "K_x": 6, "J_y": 4,
        },
    }
    sc = parse_config_dict(cfg)
    manifest, run_dir = run_scenario(sc, out_dir=str(tmp_path))
    assert manifest["status"] == "ok"
    assert sc.spec.mu(2) == 4.0
