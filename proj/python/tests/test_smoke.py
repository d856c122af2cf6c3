import json
import math
import os
import pathlib

import pytest

import hbdm

SCENARIOS = pathlib.Path(
    os.environ.get("HBDM_SCENARIO_DIR", pathlib.Path(__file__).resolve().parents[2] / "scenarios")
)


def product_state(k1=0.7, k2=-1.1):
    modes = [[hbdm.PlaneWaveMode([k1])], [hbdm.PlaneWaveMode([k2])]]
    return hbdm.WaveFunction("dirac", 1, [1.0, 1.0], [hbdm.ProductTerm(1.0, modes)])


def test_version():
    assert hbdm.__version__.count(".") == 2


def test_wedge_geometry():
    f = hbdm.WedgeFoliation(0.5, 0.0, 1.0)
    assert f.kink_count == 1
    assert f.kink_position(0, 2.0) == pytest.approx(0.0)
    n = f.normal(1.0, 1.0)
    assert n.norm_squared() == pytest.approx(1.0, abs=1e-12)
    left, right = f.kink_rapidities(0, 1.0)
    assert abs(left) == pytest.approx(math.atanh(0.5))
    assert abs(right) == pytest.approx(math.atanh(0.5))
    with pytest.raises(hbdm.HbdmError) as err:
        hbdm.WedgeFoliation(1.5, 0.0, 1.0)
    assert err.value.kind == "InvalidFamily"


def test_wavefunction_and_divergence():
    psi = product_state()
    cfg = [hbdm.MinkowskiPoint(0.1, [0.3]), hbdm.MinkowskiPoint(-0.2, [1.4])]
    assert psi.evaluate(cfg).shape == (psi.component_count,)
    assert max(psi.divergence_residuals(cfg, 1e-3)) < 1e-6


def test_product_state_velocity_is_constant_on_flat_leaves():
    psi = product_state()
    flat = hbdm.WedgeFoliation(0.0)
    v1 = hbdm.chart_velocity(psi, flat, 0.0, [0.0, 1.0])
    v2 = hbdm.chart_velocity(psi, flat, 0.5, [2.0, -3.0])
    assert v1 == pytest.approx(v2, abs=1e-12)
    assert all(abs(v) < 1 for v in v1)


def test_current_condition_and_integration_across_kink():
    psi = product_state(0.9, 0.4)
    wedge = hbdm.WedgeFoliation(0.5, 0.0, math.sqrt(0.75))
    report = hbdm.current_condition(psi, wedge, 1.0, [0.0, 0.8])
    assert report.mismatch < 1e-9
    rec = hbdm.integrate(psi, wedge, [-0.5, 0.8], 0.0, 3.0)
    assert rec["termination"] == "ReachedEnd"
    assert any(e["slot"] == 0 for e in rec["events"])
    assert rec["csv"].splitlines()[0].startswith("s,")


def test_slater_violation():
    field = hbdm.MaxwellField.random(7, 3)
    wedge = hbdm.Wedge3.random(7)
    r = hbdm.slater_kink_violation(field, wedge, wedge.kink_point(0.3, 0.1, -0.2))
    assert r["n_k_star_spacelike"]
    assert r["violation"]


def test_scenario_run_matches_manifest(tmp_path):
    sc = hbdm.load_scenario(str(SCENARIOS / "divergence_single_mode.json"))
    assert sc.run == "check-divergence"
    result = hbdm.run_scenario(sc, seed=3, output_dir=str(tmp_path / "out"))
    assert result.passed and all(c.passed for c in result.checks if c.gated)
    manifest = json.loads(result.outputs["manifest.json"])
    assert manifest["seed"] == 3
    result.write()
    assert (tmp_path / "out" / "divergence.csv").exists()


def test_config_error_names_field():
    text = (SCENARIOS / "divergence_single_mode.json").read_text()
    cfg = json.loads(text)
    del cfg["wavefunction"]["masses"]
    with pytest.raises(hbdm.HbdmError, match="wavefunction.masses") as err:
        hbdm.parse_scenario(json.dumps(cfg))
    assert err.value.code == 17
