import cmath
import json
import math

import numpy as np
import pytest

import lattice_laws as ll


def test_toda_free_green_and_energy():
    assert ll.toda_free_green(0, 0, 1.0) == pytest.approx(1 / math.sinh(1.0), rel=1e-14)
    s = ll.TodaState(0, [0.5], [1.0])
    assert ll.toda_energy(s) == pytest.approx(2.0)
    M, P = ll.toda_casimirs(s)
    assert (M, P) == (0.0, -2.0)


def test_toda_green_table_is_symmetric_and_positive():
    s = ll.TodaState(0, [0.5, 0.52, 0.49], [0.01, -0.02, 0.0])
    first, g = ll.toda_green_table(s, 2.0, -1)
    g = np.asarray(g)
    assert first < 0
    assert np.allclose(g, g.T, atol=1e-15)
    assert (g > 0).all()


def test_toda_density_report_residuals():
    s = ll.TodaState(0, [0.5, 0.51, 0.5], [0.02, 0.0, -0.01])
    r = ll.toda_density_report(s, 1.0, 1)
    assert min(r["rho"]["values"]) > -1e-12
    assert r["residuals"]["local_conservation_rho"] < 1e-9
    assert r["residuals"]["ledger_rho"] < 1e-8


def test_al_report_and_vacuum_green():
    s = ll.ALState(0, [0.05 + 0.02j, -0.03j], 1)
    r = ll.al_density_report(s, 2 + 1j)
    assert r["residuals"]["detID"] < 1e-9
    assert abs(r["sum_rho"] - r["log_det"]) < 1e-8
    g = np.asarray(ll.al_free_green(1, 0, 2.0))
    assert g[1, 1] == pytest.approx(-1.0)


def test_al_rejects_small_z_and_large_alpha():
    s = ll.ALState(0, [0.05], 1)
    with pytest.raises(ll.DomainError):
        ll.al_density_report(s, 1.5)
    with pytest.raises(ll.DomainError):
        ll.ALState(0, [1.2], 1)


def test_coercivity_unit_impulse():
    c = ll.al_coercivity([1.0], 2.0, 1, 1e-3)
    assert c["dft_re"] == pytest.approx(0.5, rel=1e-12)
    assert c["sum_re_rho2"] == pytest.approx(c["dft_re"], rel=1e-4)


def test_evolve_conserves():
    s = ll.TodaState(0, [0.5, 0.51, 0.5], [0.02, 0.0, -0.01])
    times, final, drift = ll.toda_evolve(s, 0.5)
    assert times[0] == 0.0 and times[-1] == 0.5
    assert drift["H"] < 1e-8
    a = ll.ALState(0, [0.05, 0.02j], -1)
    _, _, drift = ll.al_evolve(a, 0.5)
    assert drift["M"] < 1e-8


def test_run_experiment(tmp_path):
    out = ll.run_experiment({"model": "toda", "n-states": "2", "n-directions": "2", "out": str(tmp_path)})
    assert out["pass"]
    report = json.loads(out["json"])
    assert report["schema"] == 1
    assert (tmp_path / "report.json").exists()
    with pytest.raises(ll.ConfigError):
        ll.run_experiment({"window": "3"})
