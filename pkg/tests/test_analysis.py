import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_sphere_map, smooth_periodic
from wavemap_lab import analysis, gauge
from wavemap_lab.analysis import LorentzSpec, NormReport, lorentz_norm_weighted, rearrangement
from wavemap_lab.fields import GridSpec, MapState, differential
from wavemap_lab.geometry import MetricProfile, build_metric

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_indicator_examples():
    w = np.full(64, 1 / 16)
    f = np.zeros(64)
    f[:16] = 1.0
    assert lorentz_norm_weighted(f, LorentzSpec(4, 1), w) == pytest.approx(4.0, rel=1e-12)
    assert analysis.indicator_lorentz_norm(1.0, 4, 1) == 4.0
    for p, r in ((2, 1), (3, 5), (8, 2), (4, math.inf)):
        assert lorentz_norm_weighted(f, LorentzSpec(p, r), w) == pytest.approx(
            analysis.indicator_lorentz_norm(1.0, p, r), abs=1e-10)
    vals, t = rearrangement(f, w)
    assert np.all(vals[t <= 1.0 + 1e-12] == 1) and np.all(vals[t > 1.0 + 1e-12] == 0)
    assert t[-1] == pytest.approx(4.0)


def test_constant_field_rearrangement():
    vals, t = rearrangement(np.full((4, 4), -2.0), np.full((4, 4), 0.5))
    assert np.all(vals == 2.0) and t[-1] == 8.0


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 50, elements=finite), st.sampled_from([1.0, 2.0, 3.5, 8.0]))
def test_lpp_equals_lp(f, p):
    w = np.full(50, 0.3)
    lp = analysis.lp_norm(f, p, w)
    assert lorentz_norm_weighted(f, LorentzSpec(p, p), w) == pytest.approx(lp, rel=1e-10, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 40, elements=finite), st.floats(-5, 5))
def test_lorentz_scaling(f, lam):
    w = np.full(40, 0.1)
    spec = LorentzSpec(8, 2)
    assert lorentz_norm_weighted(lam * f, spec, w) == pytest.approx(
        abs(lam) * lorentz_norm_weighted(f, spec, w), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 40, elements=finite), arrays(np.float64, 40, elements=st.floats(0, 1)))
def test_rearrangement_monotone(g, s):
    w = np.full(40, 0.25)
    f = s * g
    vf, tf = rearrangement(f, w)
    vg, tg = rearrangement(g, w)
    assert np.all(vf <= vg + 1e-12)
    assert np.all(np.diff(vf) <= 0)


def test_rearrangement_preserves_lp(rng):
    f = rng.normal(size=500)
    w = rng.uniform(0.1, 1.0, 500)
    vals, t = rearrangement(f, w)
    dt = np.diff(np.concatenate([[0.0], t]))
    for p in (1, 2, 5):
        assert np.sum(vals ** p * dt) == pytest.approx(np.sum(np.abs(f) ** p * w), rel=1e-12)


def test_lpp_on_random_fields(rng):
    grid = GridSpec(3, 12)
    m = build_metric(grid)
    for k in range(100):
        f = analysis.random_smooth_field(np.random.default_rng([7, k]), grid)
        for p in (2, 4, 8):
            lp = analysis.lp_norm(f, p, m.volume_weights())
            assert analysis.lorentz_norm(f, LorentzSpec(p, p), metric=m) == pytest.approx(lp, rel=1e-10)


def test_riesz_potential_weak_norm():
    alpha = 1.0
    weak, strong = [], []
    for n in (8, 16, 32, 64):
        grid = GridSpec(2, n)
        k = analysis.riesz_kernel(grid, alpha)
        w = np.full(grid.shape, grid.cell_volume)
        weak.append(lorentz_norm_weighted(k, LorentzSpec(2 / alpha, math.inf), w))
        strong.append(analysis.lp_norm(k, 2.0, w))
    assert max(weak) / min(weak) < 1.01
    # |x|^-1 sits just outside L^2 in the plane: the strong norm grows like sqrt(log n)
    assert np.all(np.diff(strong) > 0.3)


def test_norm_report_validation():
    rep = NormReport(a=1.0)
    with pytest.raises(ValueError):
        rep["b"] = -1.0
    with pytest.raises(ValueError):
        NormReport(c=float("nan"))


def test_sobolev_flat_equal_and_fourier():
    grid = GridSpec(2, 64)
    m = build_metric(grid)
    x = grid.coords()
    f = np.sin(3 * x[0])
    rep = analysis.sobolev_norms(f, m)
    assert rep["H1"] == rep["H1_cov"] and rep["H2"] == rep["H2_cov"] and rep["L2"] == rep["L2_cov"]
    assert rep["H1"] == pytest.approx(3 * rep["L2"], rel=2e-2)
    assert rep["H2"] == pytest.approx(9 * rep["L2"], rel=3e-2)


def test_sobolev_small_perturbation_bounded(rng):
    grid = GridSpec(3, 16)
    f = smooth_periodic(rng, grid)
    for eps in (0.005, 0.01, 0.02):
        m = build_metric(grid, MetricProfile("general", eps, 2.4))
        rep = analysis.sobolev_norms(f, m)
        for key in ("L2", "H1", "H2"):
            assert abs(rep[key + "_cov"] / rep[key] - 1) <= 5 * eps


def test_sobolev_lp_variant(rng):
    grid = GridSpec(2, 16)
    rep = analysis.sobolev_norms(smooth_periodic(rng, grid), build_metric(grid), k=1, p=4)
    assert set(rep) == {"L4", "L4_cov", "W1,4", "W1,4_cov"}
    with pytest.raises(ValueError):
        analysis.sobolev_norms(np.zeros(grid.shape), build_metric(grid), k=3)


def test_norm_equivalence_with_measured_rhs(rng):
    grid = GridSpec(3, 16)
    m = build_metric(grid)
    u = random_sphere_map(rng, grid, 0.3)
    res = gauge.coulomb_project(gauge.pullback_frame(u), m)
    A = gauge.spatial_connection(res.frame, grid)
    du = differential(MapState(u, np.zeros_like(u)), grid)
    Q = smooth_periodic(rng, grid, (3,))
    lhs, rhs = analysis.norm_equivalence_check(Q, res.frame, A, du, grid)
    assert 0 < lhs <= 1.1 * rhs


def test_harness_requires_trials():
    with pytest.raises(ValueError):
        analysis.lorentz_inequality_harness(trials=10)


def test_harness_strict_names_counterexample():
    tiny = {k: 1e-6 for k in analysis.INEQUALITIES}
    with pytest.raises(analysis.HarnessViolation, match=r"seed \[3, "):
        analysis.lorentz_inequality_harness(100, seed=3, constants=tiny, strict=True)


def test_random_smooth_field_needs_resolution():
    with pytest.raises(ValueError, match="too coarse"):
        analysis.random_smooth_field(np.random.default_rng(0), GridSpec(2, 8))
