import numpy as np
import pytest

from conftest import random_sphere_map, smooth_periodic
from wavemap_lab import evolve
from wavemap_lab.fields import GridSpec, MapState, gradient
from wavemap_lab.geometry import MetricProfile, build_metric, bump, laplace_beltrami
from wavemap_lab.target import project, tangential


def circle_state(grid, omega, t=0.0):
    u = np.zeros((4,) + grid.shape)
    v = np.zeros_like(u)
    u[0], u[1] = np.cos(omega * t), np.sin(omega * t)
    v[0], v[1] = -omega * np.sin(omega * t), omega * np.cos(omega * t)
    return MapState(u, v, t, grid)


def bump_state(grid, amp=0.3, radius=2.5):
    x = grid.coords()
    c = grid.center
    r = np.sqrt(sum((x[i] - c[i]) ** 2 for i in range(grid.d)))
    w = bump(r / radius)
    u = np.zeros((4,) + grid.shape)
    u[0], u[1], u[2] = 1, amp * w, 0.5 * amp * w * np.sin(x[0])
    u = project(u)
    v = np.zeros_like(u)
    v[3] = amp * w
    return MapState(u, tangential(u, v), 0.0, grid)


def test_rhs_constant_map_zero():
    grid = GridSpec(2, 16)
    m = build_metric(grid)
    st = circle_state(grid, 0.0)
    assert np.all(evolve.rhs(st.u, st.udot, m) == 0)


def test_rhs_rotating_circle():
    grid = GridSpec(3, 8)
    m = build_metric(grid)
    st = circle_state(grid, 2.0, t=0.3)
    np.testing.assert_allclose(evolve.rhs(st.u, st.udot, m), -4.0 * st.u, atol=1e-13)


def test_rhs_flat_matches_continuum_formula(rng):
    # independent oracle: Lap u + (|grad u|^2 - |u_t|^2) u with exact derivatives
    errs = []
    for n in (16, 32, 64):
        grid = GridSpec(2, n)
        x = grid.coords()
        a = 0.3 * np.sin(x[0]) * np.cos(x[1])
        u = np.stack([np.cos(a), np.sin(a), 0 * a, 0 * a])
        da = np.stack([0.3 * np.cos(x[0]) * np.cos(x[1]), -0.3 * np.sin(x[0]) * np.sin(x[1])])
        lap_a = -0.6 * np.sin(x[0]) * np.cos(x[1])
        grad2 = np.sum(da ** 2, axis=0)
        perp = np.stack([-np.sin(a), np.cos(a), 0 * a, 0 * a])
        lap_u = lap_a * perp - grad2 * u
        v = np.zeros_like(u)
        v[2] = 0.2 * np.cos(x[1])
        exact = lap_u + (grad2 - np.sum(v ** 2, axis=0)) * u
        errs.append(np.max(np.abs(evolve.rhs(u, v, build_metric(grid)) - exact)))
    errs = np.array(errs)
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.8)


def test_rhs_tangential_part_is_intrinsic(rng):
    grid = GridSpec(3, 16)
    m = build_metric(grid, MetricProfile("general", 0.05, 2.4))
    u = random_sphere_map(rng, grid)
    v = tangential(u, 0.3 * rng.normal(size=u.shape))
    a = evolve.rhs(u, v, m)
    np.testing.assert_allclose(tangential(u, a), tangential(u, laplace_beltrami(m, u)), atol=1e-12)
    # discrete multiplier keeps the acceleration consistent with |u| = 1 to second order
    assert np.max(np.abs(np.sum(u * a, axis=0) + np.sum(v * v, axis=0))) < 1e-12


def test_rotating_circle_rk4_accuracy():
    grid = GridSpec(1, 8)
    m = build_metric(grid)
    st = evolve.evolve(circle_state(grid, 2.0), m, 1e-3, evolve.EvolutionConfig(1.0, "rk4"))
    err = np.max(np.abs(st.u - circle_state(grid, 2.0, 1.0).u))
    assert err <= 1e-5
    assert st.t == pytest.approx(1.0)


def test_leapfrog_second_order_in_time():
    grid = GridSpec(2, 16)
    m = build_metric(grid, MetricProfile("conformal", 0.05, 2.4))
    st0 = bump_state(grid)
    ref = evolve.evolve(st0, m, grid.dt / 64, evolve.EvolutionConfig(0.5, "rk4"))
    errs = []
    for k in (4, 8, 16):
        st = evolve.evolve(st0, m, grid.dt / k, evolve.EvolutionConfig(0.5))
        errs.append(np.max(np.abs(st.u - ref.u)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_zero_data_stays_zero():
    grid = GridSpec(3, 8)
    m = build_metric(grid)
    st = evolve.evolve(circle_state(grid, 0.0), m, grid.dt, evolve.EvolutionConfig(0.5))
    np.testing.assert_array_equal(st.u, circle_state(grid, 0.0).u)
    assert np.all(st.udot == 0)


def test_constraints_restored_each_step(rng):
    grid = GridSpec(2, 16)
    m = build_metric(grid, MetricProfile("general", 0.05, 2.4))
    seen = []
    evolve.evolve(bump_state(grid, amp=0.6), m, grid.dt, evolve.EvolutionConfig(0.5),
                  callback=lambda k, s: seen.append(s.constraint_errors()))
    assert max(max(e) for e in seen) < 1e-12


def test_nan_aborts_with_step_index():
    grid = GridSpec(1, 8)
    m = build_metric(grid)
    st = circle_state(grid, 1.0)
    st.udot[0, 3] = np.nan
    with pytest.raises(evolve.EvolutionAborted) as err:
        evolve.evolve(st, m, grid.dt, evolve.EvolutionConfig(0.1))
    assert err.value.step == 0


def test_config_validation():
    with pytest.raises(ValueError):
        evolve.EvolutionConfig(integrator="euler")
    with pytest.raises(ValueError):
        evolve.EvolutionConfig(renormalize_every=0)


def test_energy_examples():
    grid = GridSpec(3, 16)
    m = build_metric(grid, MetricProfile("conformal", 0.05, 2.4))
    assert evolve.energy(circle_state(grid, 0.0), m) == 0
    V = np.sum(m.volume_weights())
    assert evolve.energy(circle_state(grid, 2.0), m) == pytest.approx(0.5 * 4.0 * V, rel=1e-13)
    st = bump_state(grid)
    still = MapState(st.u, 0 * st.udot)
    kin = evolve.energy(st, m) - evolve.energy(still, m)
    kin2 = evolve.energy(MapState(st.u, 2 * st.udot), m) - evolve.energy(still, m)
    assert kin2 == pytest.approx(4 * kin, rel=1e-12)


def test_energy_drift_second_order():
    drifts = []
    for n in (16, 32, 64):
        grid = GridSpec(2, n)
        m = build_metric(grid, MetricProfile("conformal", 0.05, 2.4))
        st0 = bump_state(grid)
        E0 = evolve.energy(st0, m)
        es = []
        evolve.evolve(st0, m, grid.dt, evolve.EvolutionConfig(1.0),
                      callback=lambda k, s: es.append(evolve.energy(s, m)))
        drifts.append(np.max(np.abs(np.array(es) - E0)) / E0)
    orders = np.log2(np.array(drifts[:-1]) / np.array(drifts[1:]))
    assert np.all(np.abs(orders - 2) < 0.3)


def test_finite_propagation():
    grid = GridSpec(2, 256, 16.0)
    m = build_metric(grid, MetricProfile("conformal", 0.05, 2.0))
    R, T = 1.5, 2.0
    x = grid.coords()
    r = np.sqrt(sum((x[i] - grid.center[i]) ** 2 for i in range(2)))
    st0 = bump_state(grid, amp=0.2, radius=R)
    st = evolve.evolve(st0, m, grid.dt, evolve.EvolutionConfig(T))
    speed = 1 + m.deviation_sup()
    # the stencil widens the numerical cone by a few cells; allow four
    outside = r > R + speed * T + 4 * grid.h[0]
    assert np.max(np.abs(st.u - st0.u)[:, outside]) <= 1e-10
    assert np.max(np.abs(st.u - st0.u)) > 0.05


def test_covariant_energy_flat_trivial_frame(rng):
    grid = GridSpec(3, 16)
    m = build_metric(grid)
    q = smooth_periodic(rng, grid, (4, 3))
    A = np.zeros((4, 3, 3) + grid.shape)
    dq = gradient(q, grid)
    assert evolve.covariant_energy_H2(q, A, m) == pytest.approx(np.sum(dq ** 2) * grid.cell_volume,
                                                                rel=1e-12)
    assert evolve.covariant_energy_H2(0 * q, A, m) == 0


def test_covariant_energy_gauge_invariant_under_constant_rotation(rng):
    from wavemap_lab.gauge import expm_so3

    grid = GridSpec(3, 16)
    m = build_metric(grid, MetricProfile("general", 0.05, 2.4))
    q = smooth_periodic(rng, grid, (4, 3))
    A = smooth_periodic(rng, grid, (4, 3, 3))
    A = A - np.swapaxes(A, 1, 2)
    R = expm_so3(rng.normal(size=3))
    q2 = np.einsum("ba,cb...->ca...", R, q)
    A2 = np.einsum("xb,cxy...,ya->cba...", R, A, R)
    assert evolve.covariant_energy_H2(q2, A2, m) == pytest.approx(evolve.covariant_energy_H2(q, A, m),
                                                                  rel=1e-12)
