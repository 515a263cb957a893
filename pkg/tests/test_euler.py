import numpy as np
import pytest

import riemann_oracle as ro
from pdettc import euler
from pdettc.euler import (GridSpec, ICSpec, InvalidInitialCondition, Snapshot,
                          SolverError, conservation_drift, fv_step,
                          generate_dataset, make_initial_condition,
                          max_stable_dt, sample_ic, solve_trajectory,
                          split_indices, totals)

GAMMA = 1.4


def uniform_snapshot(nx, ny, rho=1.0, vx=0.3, vy=-0.2, p=0.7):
    shape = (nx, ny)
    return Snapshot.from_fields(np.stack([
        np.full(shape, rho), np.full(shape, vx),
        np.full(shape, vy), np.full(shape, p)]), 0.0)


# ---------------------------------------------------------------------------
# oracle self-consistency (independent of the FV path)


def test_oracle_sod_star_state_frozen():
    p_star, u_star = ro.solve_star(ro.SOD_LEFT, ro.SOD_RIGHT, GAMMA)
    # values computed by this oracle via Newton iteration, frozen here
    assert p_star == pytest.approx(0.3031301781, abs=1e-9)
    assert u_star == pytest.approx(0.9274526200, abs=1e-9)
    fl, _ = ro._pressure_fn(p_star, ro.SOD_LEFT, GAMMA)
    fr, _ = ro._pressure_fn(p_star, ro.SOD_RIGHT, GAMMA)
    assert abs(fl + fr + (ro.SOD_RIGHT.u - ro.SOD_LEFT.u)) < 1e-12


def test_oracle_right_shock_satisfies_rankine_hugoniot():
    g = GAMMA
    p_star, u_star = ro.solve_star(ro.SOD_LEFT, ro.SOD_RIGHT, g)
    r = ro.SOD_RIGHT
    pr = p_star / r.p
    speed = r.u + r.sound_speed(g) * np.sqrt((g + 1) / (2 * g) * pr + (g - 1) / (2 * g))
    rho_star = r.rho * (pr + (g - 1) / (g + 1)) / ((g - 1) / (g + 1) * pr + 1.0)
    # mass and momentum fluxes in the shock frame must match across the jump
    assert r.rho * (speed - r.u) == pytest.approx(rho_star * (speed - u_star), abs=1e-12)
    assert r.p + r.rho * (speed - r.u) ** 2 == pytest.approx(
        p_star + rho_star * (speed - u_star) ** 2, abs=1e-12)


def test_oracle_left_fan_is_isentropic():
    g = GAMMA
    xi = np.linspace(-1.1, -0.1, 9)
    rho, _, p = ro.sample(ro.SOD_LEFT, ro.SOD_RIGHT, xi, g)
    s = p / rho ** g
    assert np.max(np.abs(s - s[0])) < 1e-12


# ---------------------------------------------------------------------------
# fv_step basics


def test_uniform_state_is_fixed_point():
    u = uniform_snapshot(16, 16)
    out = fv_step(u, 1e-3, GAMMA)
    assert np.array_equal(out.fields(), u.fields())
    assert out.t == pytest.approx(1e-3)


def test_single_step_conserves_totals():
    spec = sample_ic("rp", seed=11)
    grid = GridSpec(32, 32)
    u = make_initial_condition(spec, grid)
    dt = max_stable_dt(u, grid, GAMMA, 0.4)
    out = fv_step(u, dt, GAMMA, grid)
    before, after = totals(u, GAMMA), totals(out, GAMMA)
    scale = np.maximum(np.abs(before), np.abs(before[0]))
    assert np.all(np.abs(after - before) / scale < 1e-12)


def test_cfl_violation_rejected():
    spec = sample_ic("kh", seed=1)
    grid = GridSpec(16, 16)
    u = make_initial_condition(spec, grid)
    with pytest.raises(SolverError, match="CFL"):
        fv_step(u, 10.0 * max_stable_dt(u, grid, GAMMA), GAMMA, grid)
    with pytest.raises(SolverError):
        fv_step(u, -1e-3, GAMMA, grid)


def test_translation_equivariance_whole_cells():
    grid = GridSpec(24, 24)
    u = make_initial_condition(sample_ic("crp", seed=5), grid)
    shifted = Snapshot.from_fields(np.roll(u.fields(), (7, 3), axis=(1, 2)), 0.0)
    a, b = u, shifted
    for _ in range(12):
        dt = min(max_stable_dt(a, grid, GAMMA, 0.4),
                 max_stable_dt(b, grid, GAMMA, 0.4))
        a = fv_step(a, dt, GAMMA, grid)
        b = fv_step(b, dt, GAMMA, grid)
    assert np.max(np.abs(np.roll(a.fields(), (7, 3), axis=(1, 2)) - b.fields())) <= 1e-12


# ---------------------------------------------------------------------------
# Sod shock tube vs the exact oracle
#
# Doubled periodic domain [0, 2] keeps the wrap-interface waves away
# from the central structure until past t = 0.2; dx = 1/256.


def test_sod_density_profile_matches_exact_oracle():
    nx, ny = 512, 8
    grid = GridSpec(nx, ny, lx=2.0, ly=2.0 * ny / nx)
    x, _ = grid.cell_centers()
    left, right = ro.SOD_LEFT, ro.SOD_RIGHT
    fields = np.stack([
        np.where(x < 1.0, left.rho, right.rho),
        np.zeros_like(x), np.zeros_like(x),
        np.where(x < 1.0, left.p, right.p)])
    cur = Snapshot.from_fields(fields, 0.0)
    t_end = 0.2
    while cur.t < t_end - 1e-13:
        dt = min(max_stable_dt(cur, grid, GAMMA, 0.4), t_end - cur.t)
        cur = fv_step(cur, dt, GAMMA, grid)
    xs = x[:, 0]
    window = (xs >= 0.25) & (xs <= 1.65)
    rho_exact, _, _ = ro.profile_at(left, right, xs[window], t_end, x0=1.0, gamma=GAMMA)
    l1 = float(np.mean(np.abs(cur.rho[window, 0] - rho_exact)))
    jump = left.rho - right.rho
    assert l1 < 0.02 * jump, f"L1 {l1:.4f} vs bound {0.02 * jump:.4f}"
    # y-extruded data must stay y-uniform
    assert np.max(np.abs(cur.rho - cur.rho[:, :1])) < 1e-12


# ---------------------------------------------------------------------------
# trajectories


def test_trajectory_snapshot_times_and_count():
    traj = solve_trajectory(sample_ic("gauss", seed=2), GridSpec(16, 16))
    assert len(traj) == 21
    assert np.allclose(traj.times, np.arange(21) / 20.0)
    assert [s.t for s in traj.snapshots] == list(traj.times)


def test_uniform_ic_gives_steady_trajectory():
    spec = ICSpec("gauss", {"rho0": 1.0, "p0": 1.0, "bumps": []}, seed=0)
    traj = solve_trajectory(spec, GridSpec(8, 8))
    for s in traj.snapshots[1:]:
        assert np.array_equal(s.fields(), traj.snapshots[0].fields())


def test_trajectory_starts_at_realized_ic():
    grid = GridSpec(16, 16)
    spec = sample_ic("rm", seed=4)
    traj = solve_trajectory(spec, grid)
    ic = make_initial_condition(spec, grid)
    assert np.array_equal(traj.snapshots[0].fields(), ic.fields())


def test_kh_trajectory_conserves_to_1e10():
    traj = solve_trajectory(sample_ic("kh", seed=3), GridSpec(32, 32))
    drift = conservation_drift(traj, GAMMA)
    for k, v in drift.items():
        assert v < 1e-10, f"{k} drift {v:.3e}"


def test_positivity_everywhere_on_all_families():
    for fam in euler.FAMILIES:
        traj = solve_trajectory(sample_ic(fam, seed=8), GridSpec(16, 16))
        for s in traj.snapshots:
            assert s.rho.min() > 0.0 and s.p.min() > 0.0


# ---------------------------------------------------------------------------
# initial conditions


def test_gauss_zero_bumps_is_uniform_background():
    spec = ICSpec("gauss", {"rho0": 1.3, "p0": 0.9, "bumps": []}, seed=0)
    s = make_initial_condition(spec, GridSpec(8, 8))
    assert np.all(s.rho == 1.3) and np.all(s.p == 0.9)
    assert np.all(s.vx == 0.0) and np.all(s.vy == 0.0)


def test_gauss_zero_amplitude_bump_is_uniform():
    spec = ICSpec("gauss", {"rho0": 1.0, "p0": 1.0, "bumps": [
        {"x": 0.5, "y": 0.5, "sigma": 0.1, "amp_rho": 0.0, "amp_p": 0.0}]}, seed=0)
    s = make_initial_condition(spec, GridSpec(8, 8))
    assert np.all(s.rho == 1.0) and np.all(s.p == 1.0)


def test_rp_degenerate_quadrants_uniform():
    st = [0.9, 0.1, -0.2, 1.1]
    spec = ICSpec("rp", {"x0": 0.5, "y0": 0.5, "states": [st] * 4}, seed=0)
    s = make_initial_condition(spec, GridSpec(8, 8))
    for c, v in zip(s.fields(), st):
        assert np.all(c == v)


def test_kh_vx_matches_closed_form_shear_profile():
    params = {"rho_in": 2.0, "rho_out": 1.0, "u0": 0.5, "delta": 0.03,
              "amp": 0.01, "k_mode": 1, "p0": 2.5}
    grid = GridSpec(32, 32)
    s = make_initial_condition(ICSpec("kh", params, seed=0), grid)
    _, y = grid.cell_centers()
    expected = 0.5 * np.tanh((0.25 - np.abs(y - 0.5)) / 0.03)
    assert np.array_equal(s.vx, expected)
    assert np.max(np.abs(s.vx)) <= 0.5


def test_rm_post_shock_state_satisfies_rankine_hugoniot():
    g = GAMMA
    rho2, u2, p2 = euler.shock_jump_state(1.0, 1.0, mach=1.5, gamma=g)
    c1 = np.sqrt(g)
    speed = 1.5 * c1
    # conservation of mass/momentum/energy fluxes in the shock frame
    m1, m2 = 1.0 * speed, rho2 * (speed - u2)
    assert m1 == pytest.approx(m2, rel=1e-12)
    assert 1.0 + m1 * speed == pytest.approx(p2 + m2 * (speed - u2), rel=1e-12)
    h1 = g / (g - 1) * 1.0 / 1.0 + 0.5 * speed ** 2
    h2 = g / (g - 1) * p2 / rho2 + 0.5 * (speed - u2) ** 2
    assert h1 == pytest.approx(h2, rel=1e-12)


def test_invalid_ic_parameters_rejected():
    bad = ICSpec("gauss", {"rho0": 1.0, "p0": 1.0, "bumps": [
        {"x": 0.5, "y": 0.5, "sigma": 0.2, "amp_rho": -2.0, "amp_p": 0.0}]}, seed=0)
    with pytest.raises(InvalidInitialCondition):
        make_initial_condition(bad, GridSpec(8, 8))
    with pytest.raises(InvalidInitialCondition):
        ICSpec("nope", {}, seed=0)


def test_grid_spec_invariants():
    with pytest.raises(ValueError):
        GridSpec(4, 16)
    g = GridSpec(10, 20, lx=1.0, ly=2.0)
    assert g.dx == pytest.approx(0.1) and g.dy == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# dataset generation


def test_split_counts_exact():
    split = split_indices(128, (0.75, 0.125, 0.125), seed=0)
    assert (len(split["train"]), len(split["val"]), len(split["test"])) == (96, 16, 16)
    all_ids = sorted(split["train"] + split["val"] + split["test"])
    assert all_ids == list(range(128))


def test_split_fractions_must_sum_to_one():
    with pytest.raises(ValueError):
        split_indices(10, (0.5, 0.2, 0.2), seed=0)


def test_generate_dataset_deterministic_and_normalized():
    grid = GridSpec(16, 16)
    a = generate_dataset(["rp"], 4, grid, seed=9, split_fractions=(0.5, 0.25, 0.25))
    b = generate_dataset(["rp"], 4, grid, seed=9, split_fractions=(0.5, 0.25, 0.25))
    for ta, tb in zip(a.trajectories, b.trajectories):
        for sa, sb in zip(ta.snapshots, tb.snapshots):
            assert np.array_equal(sa.fields(), sb.fields())
    assert a.split == b.split
    assert np.array_equal(a.normalization.mean, b.normalization.mean)
    # stats really come from the train split only
    train = a.split_trajectories("train")
    ref = euler.Normalization.from_trajectories(train)
    assert np.array_equal(a.normalization.mean, ref.mean)


def test_generate_dataset_empty():
    ds = generate_dataset(["rp"], 0, GridSpec(8, 8), seed=1)
    assert ds.trajectories == [] and ds.normalization is None
    assert all(len(v) == 0 for v in ds.split.values())


def test_normalization_roundtrip():
    ds = generate_dataset(["gauss"], 2, GridSpec(8, 8), seed=3,
                          split_fractions=(1.0, 0.0, 0.0))
    f = ds.trajectories[0].snapshots[5].fields()
    back = ds.normalization.unapply(ds.normalization.apply(f))
    assert np.max(np.abs(back - f)) < 1e-12
