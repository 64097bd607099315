import numpy as np
import pytest

from fbmsde import (
    ConfigError,
    DomainError,
    HurstVector,
    Partition,
    Trajectory,
    child_seed,
    coarsen,
    compute_U,
    fundamental_matrix_reference,
    limit_check,
    make_linear_drift,
    reference_solution,
    residual_bundle,
    sample_multi,
    solve_U_ode,
    zero_path,
)
from fbmsde.drifts import CUBIC1D, DOUBLEWELL1D, PLANAR_CUBIC
from fbmsde.harness import fit_order

H07 = HurstVector.constant(0.7, 1)


def flat_traj(grid: Partition, value: float, drift: str = "doublewell1d") -> Trajectory:
    states = np.full((grid.times.size, 1), value)
    return Trajectory(grid=grid, states=states, scheme="reference",
                      drift=drift, path_seed=0)


# --- residual decomposition oracles -------------------------------------------

def test_residual_drift_term_hand_value():
    # constant state 2.0, one interval of length 0.1, zero noise:
    # r1 = (Jb b)(2) dt^2 / 2 = 66 * 0.01 / 2 = 0.33 and r = r2 = 0
    g = Partition.uniform(0.1, 1)
    traj = flat_traj(g, 2.0)
    noise = zero_path(g, H07)
    bundle = residual_bundle(DOUBLEWELL1D, traj, noise, g, 0)
    assert bundle.r == pytest.approx([0.0], abs=1e-15)
    assert bundle.r1 == pytest.approx([0.33], rel=1e-12)
    assert bundle.r2 == pytest.approx([0.0], abs=1e-15)
    assert bundle.rhat == pytest.approx([0.33], rel=1e-12)
    assert bundle.k == 0


def test_residual_noise_term_hand_value():
    # B = (0, 0.3) on one interval of length 0.1: the trapezoid of
    # B_{t1} - B_s is 0.015, scaled by J(2) = -11 gives -0.165
    from fbmsde import FbmPath

    g = Partition.uniform(0.1, 1)
    traj = flat_traj(g, 2.0)
    noise_path = FbmPath(g, np.array([[0.0], [0.3]]), H07, 0)
    bundle = residual_bundle(DOUBLEWELL1D, traj, noise_path, g, 0)
    assert bundle.r2 == pytest.approx([-0.165], rel=1e-12)
    assert bundle.r == pytest.approx([0.0], abs=1e-15)


def test_residual_quadrature_hand_value():
    # two fine steps per coarse interval; states 2.0, 1.5, 1.0 under the
    # double-well drift have b = -6, -1.875, 0, so the trapezoid of
    # b(X_s) - b(X_1) over [0, 0.1] is 0.025 * ((-6) + 2 * (-1.875)) = -0.24375
    fine = Partition.uniform(0.1, 2)
    coarse = fine.subsample(2)
    states = np.array([[2.0], [1.5], [1.0]])
    traj = Trajectory(grid=fine, states=states, scheme="reference",
                      drift="doublewell1d", path_seed=0)
    noise = zero_path(fine, H07)
    bundle = residual_bundle(DOUBLEWELL1D, traj, noise, coarse, 0)
    assert bundle.r == pytest.approx([-0.24375], rel=1e-12)
    # r1 uses the left state: (Jb b)(2) * 0.1^2 / 2
    assert bundle.r1 == pytest.approx([0.33], rel=1e-12)


def test_residual_bundle_validates_interval_index():
    g = Partition.uniform(0.1, 1)
    traj = flat_traj(g, 2.0)
    noise = zero_path(g, H07)
    with pytest.raises(DomainError):
        residual_bundle(DOUBLEWELL1D, traj, noise, g, 1)
    with pytest.raises(DomainError):
        residual_bundle(DOUBLEWELL1D, traj, noise, g, -1)


def test_residual_rates_match_smoothness_of_the_path():
    # corrected defect r_hat contracts like dt^{2H + 1} in the mean across
    # intervals; the raw exponent fitted over dyadic meshes lands nearby
    spec = PLANAR_CUBIC
    x0 = np.array([1.0, 1.0])
    hv = HurstVector.constant(0.7, 2)
    gm = Partition.uniform(1.0, 2 ** 11)
    ks = (4, 5, 6, 7)
    means = np.zeros((8, len(ks)))
    maxs = np.zeros((8, len(ks)))
    for path in range(8):
        noise = sample_multi(gm, hv, child_seed(31, path), method="circulant")
        traj = reference_solution(spec, noise, x0)
        for i, k in enumerate(ks):
            coarse = gm.subsample(2 ** 11 // 2 ** k)
            norms = [np.linalg.norm(
                residual_bundle(spec, traj, noise, coarse, j).rhat)
                for j in range(coarse.n_steps)]
            means[path, i] = np.mean(norms)
            maxs[path, i] = np.max(norms)
    meshes = [2.0 ** -k for k in ks]
    mean_slope, _ = fit_order(meshes, means.mean(axis=0))
    max_slope, _ = fit_order(meshes, maxs.mean(axis=0))
    assert 2.1 <= mean_slope <= 2.7          # 2H + 1 = 2.4 at H = 0.7
    assert max_slope >= 2.0


# --- the limit process ----------------------------------------------------------

def test_compute_u_is_zero_at_time_origin():
    g = Partition.uniform(1.0, 8)
    noise = sample_multi(g, H07, seed=1, method="circulant")
    traj = reference_solution(CUBIC1D, noise, np.array([1.0]))
    phi = fundamental_matrix_reference(CUBIC1D, traj)
    assert np.array_equal(compute_U(CUBIC1D, traj, phi, noise, 0.0), np.zeros(1))


def test_compute_u_vanishes_at_equilibrium_without_noise():
    # at the stable well x = 1 with no noise both integrands vanish
    g = Partition.uniform(1.0, 16)
    traj = flat_traj(g, 1.0)
    noise = zero_path(g, H07)
    phi = fundamental_matrix_reference(DOUBLEWELL1D, traj)
    u = compute_U(DOUBLEWELL1D, traj, phi, noise, 1.0)
    assert u == pytest.approx([0.0], abs=1e-14)


def test_compute_u_scalar_left_point_oracle():
    # independent scalar reimplementation with plain Python loops
    lam = -1.0
    spec = make_linear_drift(np.array([[lam]]), name="decay")
    g = Partition.uniform(1.0, 16)
    noise = sample_multi(g, H07, seed=9, method="circulant")
    traj = reference_solution(spec, noise, np.array([1.0]))
    phi = fundamental_matrix_reference(spec, traj)
    kt = 16
    phis = phi.matrices[:, 0, 0]
    acc = 0.0
    for j in range(kt):
        dt = g.times[j + 1] - g.times[j]
        db = noise.values[j + 1, 0] - noise.values[j, 0]
        bx = lam * traj.states[j, 0]
        acc += (phis[kt] / phis[j]) * lam * (bx * dt + db)
    oracle = 0.5 * acc
    got = compute_U(spec, traj, phi, noise, 1.0)
    assert got[0] == pytest.approx(oracle, rel=1e-12)


def test_compute_u_requires_shared_grid_and_node():
    g = Partition.uniform(1.0, 8)
    noise = sample_multi(g, H07, seed=1, method="circulant")
    traj = reference_solution(CUBIC1D, noise, np.array([1.0]))
    phi = fundamental_matrix_reference(CUBIC1D, traj)
    from fbmsde import GridError

    other = zero_path(Partition.uniform(1.0, 4), H07)
    with pytest.raises(GridError):
        compute_U(CUBIC1D, traj, phi, other, 1.0)
    with pytest.raises(GridError):
        compute_U(CUBIC1D, traj, phi, noise, 0.33)


def test_solve_u_ode_zero_field_stays_zero():
    spec = make_linear_drift(np.array([[0.0]]), name="zero1")
    g = Partition.uniform(1.0, 32)
    noise = sample_multi(g, H07, seed=2, method="circulant")
    traj = reference_solution(spec, noise, np.array([0.5]))
    u = solve_U_ode(spec, traj, noise)
    assert not u.states.any()
    assert u.scheme == "error_sde"


def test_solve_u_ode_scalar_recursion_oracle():
    g = Partition.uniform(1.0, 16)
    noise = sample_multi(g, H07, seed=4, method="circulant")
    traj = reference_solution(CUBIC1D, noise, np.array([1.0]))
    got = solve_U_ode(CUBIC1D, traj, noise)
    u = 0.0
    xs = traj.states[:, 0]
    for k in range(16):
        dt = g.times[k + 1] - g.times[k]
        db = noise.values[k + 1, 0] - noise.values[k, 0]
        jac_r = -3.0 * xs[k + 1] ** 2
        ddb_r = jac_r * (-xs[k + 1] ** 3)
        jac_l = -3.0 * xs[k] ** 2
        u = (u + 0.5 * ddb_r * dt + 0.5 * jac_l * db) / (1.0 - dt * jac_r)
        assert got.states[k + 1, 0] == pytest.approx(u, rel=1e-12, abs=1e-14)


def test_flow_semigroup_on_constant_jacobian():
    # uniform mesh and a state-independent Jacobian make the flow a power
    # of one step matrix, so nodes compose multiplicatively
    rot = make_linear_drift(np.array([[-0.5, 1.0], [-1.0, -0.5]]), name="spiral")
    g = Partition.uniform(1.0, 16)
    traj = reference_solution(rot, zero_path(g, HurstVector.constant(0.7, 2)),
                              np.array([1.0, 0.0]))
    phi = fundamental_matrix_reference(rot, traj)
    assert np.allclose(phi.matrices[8] @ phi.matrices[8], phi.matrices[16],
                       rtol=1e-10)


@pytest.mark.slow
def test_limit_evaluations_refine_as_cauchy_sequences():
    # grid refinement n = 64 -> 128 -> 256 shrinks consecutive differences
    # of both evaluators; means calibrated near 0.66 at H = 0.8
    spec = PLANAR_CUBIC
    x0 = np.array([1.0, 1.0])
    hv = HurstVector.constant(0.8, 2)
    gm = Partition.uniform(1.0, 512)
    u_ratios, v_ratios = [], []
    for s in range(8):
        noise = sample_multi(gm, hv, child_seed(101, s), method="circulant")
        us, vs = [], []
        for n in (64, 128, 256):
            cg = gm.subsample(512 // n)
            cn_noise = coarsen(noise, cg)
            ct = reference_solution(spec, cn_noise, x0)
            cphi = fundamental_matrix_reference(spec, ct)
            us.append(compute_U(spec, ct, cphi, cn_noise, 1.0))
            vs.append(solve_U_ode(spec, ct, cn_noise).states[-1])
        u_ratios.append(np.linalg.norm(us[2] - us[1]) / np.linalg.norm(us[1] - us[0]))
        v_ratios.append(np.linalg.norm(vs[2] - vs[1]) / np.linalg.norm(vs[1] - vs[0]))
        assert u_ratios[-1] < 1.0
        assert v_ratios[-1] < 1.0
    assert np.mean(u_ratios) <= 0.85
    assert np.mean(v_ratios) <= 0.85


def test_two_limit_evaluators_agree_to_leading_order():
    # same path, same grid: the quadrature and the one-step recursion solve
    # the same linear equation up to higher-order terms
    g = Partition.uniform(1.0, 256)
    noise = sample_multi(g, H07, seed=6, method="circulant")
    traj = reference_solution(CUBIC1D, noise, np.array([1.0]))
    phi = fundamental_matrix_reference(CUBIC1D, traj)
    u_quad = compute_U(CUBIC1D, traj, phi, noise, 1.0)
    u_ode = solve_U_ode(CUBIC1D, traj, noise).states[-1]
    assert np.linalg.norm(u_quad - u_ode) <= 0.1 * max(np.linalg.norm(u_quad), 1e-3)


# --- Monte Carlo comparison harness ----------------------------------------------

def test_limit_check_zero_drift_gives_exact_zeros():
    spec = make_linear_drift(np.array([[0.0]]), name="zero1")
    out = limit_check(spec, np.array([0.3]), 0.7, 1.0, (4, 8), mc_paths=3, seed=0)
    assert out.n_values == (4, 8)
    # trajectories only differ through float summation order, U is exactly 0
    assert (out.lp_distances < 1e-10).all()
    assert np.array_equal(out.mean_abs_u, np.zeros(2))


def test_limit_check_smoke_fields():
    spec = make_linear_drift(np.array([[-1.0]]), name="decay")
    out = limit_check(spec, np.array([1.0]), 0.7, 1.0, (8, 16), mc_paths=6, seed=3)
    assert out.p == 1.0
    assert out.lp_distances.shape == (2,)
    assert (out.lp_distances > 0.0).all()
    assert (out.stderrs > 0.0).all()
    assert (out.mean_abs_nz > 0.0).all()
    assert np.isfinite(out.mean_abs_u).all()


def test_limit_check_validates_inputs():
    with pytest.raises(DomainError):
        limit_check(CUBIC1D, np.array([1.0]), 0.7, 1.0, (8,), 2, 0, p=2.5)
    with pytest.raises(DomainError):
        limit_check(CUBIC1D, np.array([1.0]), 0.7, 1.0, (8,), 2, 0, p=0.5)
    with pytest.raises(ConfigError):
        limit_check(CUBIC1D, np.array([1.0]), 0.7, 1.0, (3, 8), 2, 0)


def test_limit_check_time_origin_short_circuits():
    out = limit_check(CUBIC1D, np.array([1.0]), 0.7, 0.0, (4, 8), 2, 0)
    assert np.array_equal(out.lp_distances, np.zeros(2))
    assert np.array_equal(out.mean_abs_nz, np.zeros(2))
