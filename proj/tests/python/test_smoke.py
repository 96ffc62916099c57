import json
import math

import numpy as np
import pytest

import vpfp


def test_config_round_trip_and_violations():
    cfg = vpfp.config(n=[64, 128], seeds=[1, 2])
    assert cfg["n"] == [64, 128]
    assert vpfp.config_violations(json.dumps({"mode": "thm1", "delta": 0.4})) == [
        "/delta: delta must be < 1/3"
    ]
    with pytest.raises(ValueError):
        vpfp.normalize_config('{"seeds": []}')


def test_kernel_matches_coulomb_outside_cutoff():
    x = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    k = vpfp.kernel(x, family="lp", delta=0.3, n=1000)
    assert k.shape == x.shape
    assert k[0, 0] == pytest.approx(1.0 / (4.0 * math.pi))
    assert k[1, 1] == pytest.approx(1.0 / (4.0 * math.pi * 4.0))
    assert vpfp.unit_sphere_area(3) == pytest.approx(4.0 * math.pi)


def test_coupled_run_shapes():
    cfg = vpfp.config(n=[32], t_end=0.1, dt=0.05, mean_field={"cells": 16})
    run = vpfp.run_coupled(json.dumps(cfg))
    assert run["deviation"].shape == (3,)
    assert run["deviation"][0] == 0.0
    assert run["phi"][-1]["x"].shape == (32, 3)
    assert run["sup_deviation"] >= 0.0


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 2))
    assert vpfp.wasserstein2(a, a) == 0.0
    assert vpfp.wasserstein2(a, a + [0.3, 0.4]) == pytest.approx(0.5)
    value, se, corrected = vpfp.wasserstein2_sliced(a[:, :1], a[:, :1] + 1.0, projections=4)
    assert value == pytest.approx(1.0)
    p, q = np.array([0.5, 0.5]), np.array([0.75, 0.25])
    assert vpfp.kl_divergence(p, q) == pytest.approx(0.143841036, rel=1e-8)
    assert vpfp.l1_distance(p, q) == pytest.approx(0.5)
    fit = vpfp.fit_rate([100, 200, 400], [100 ** -0.5, 200 ** -0.5, 400 ** -0.5])
    assert fit["slope"] == pytest.approx(-0.5)


def test_sample_and_vp1d_mass():
    s = vpfp.sample_initial(dim=1, n=100, seed=3)
    assert s["x"].shape == (100, 1)
    x = np.linspace(-6, 6, 64, endpoint=False) + 6.0 / 64
    f0 = np.exp(-0.5 * (x[:, None] ** 2 + x[None, :] ** 2))
    f0 /= f0.sum() * (12.0 / 64) ** 2
    f = vpfp.solve_vp1d(f0, t_end=0.2)
    assert f.shape == (64, 64)
    assert f.sum() * (12.0 / 64) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_sweep_and_snapshot(tmp_path):
    cfg = vpfp.config(
        n=[32], t_end=0.1, dt=0.05, mean_field={"cells": 16}, snapshots=True, out=str(tmp_path)
    )
    out = vpfp.run_sweep(json.dumps(cfg))
    summary = json.loads(vpfp.report([str(tmp_path / "sweep.csv")]))
    assert summary["row_count"] == 5
    snaps = sorted((tmp_path / "snapshots").iterdir())
    assert snaps
    state = vpfp.read_snapshot(str(snaps[0]))
    assert state["x"].shape == (32, 3)
    assert out == str(tmp_path)
