import numpy as np
import pytest

from chaosfilter import dynamics, filters, observation
from chaosfilter.harness import DiscreteMapModel
from chaosfilter.observation import ObservationSequence
from chaosfilter.spectral import SpectralGrid


def l63_setup():
    model = dynamics.lorenz63()
    P = observation.coordinate_projection(3, [0])
    noise = observation.GaussianObservedNoise(P)
    return model, P, noise


def rotation(angle, scale=1.0):
    c, s = np.cos(angle), np.sin(angle)
    return scale * np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# V norms


def test_euclidean_plus_observed_values():
    P = observation.coordinate_projection(3, [0])
    V = filters.VNorm.euclidean_plus_observed(P)
    x = np.array([1.0, 2.0, 3.0])
    assert V.value(x) == pytest.approx(1.0 + 14.0)
    assert V.theta == 1.0


def test_vnorm_parallelogram_law():
    P = observation.coordinate_projection(4, [1, 3])
    V = filters.VNorm.euclidean_plus_observed(P)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        lhs = V.value(x + y) + V.value(x - y)
        assert lhs == pytest.approx(2.0 * (V.value(x) + V.value(y)), rel=1e-12)


def test_vnorm_h1_matches_grid():
    grid = SpectralGrid(3)
    V = filters.VNorm.h1(grid)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(grid.n_reps) + 1j * rng.standard_normal(grid.n_reps)
    assert V.value(x) == pytest.approx(grid.h1_norm2(x), rel=1e-12)


def test_vnorm_definiteness_and_inner():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    V = filters.VNorm.quadratic(S)
    assert V.value(np.zeros(2)) == 0.0
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.standard_normal(2)
        assert V.value(x) > 0.0
        assert V.value(x) >= V.theta * (x @ x) - 1e-12


# ---------------------------------------------------------------------------
# ball projection


def test_project_ball_identity_inside():
    P = observation.coordinate_projection(3, [0])
    V = filters.VNorm.euclidean_plus_observed(P)
    x = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(filters.project_ball_V(V, 10.0, x), x)


def test_project_ball_lands_on_surface():
    P = observation.coordinate_projection(3, [0])
    V = filters.VNorm.euclidean_plus_observed(P)
    x = np.array([5.0, -3.0, 7.0])
    R = 1.7
    out = filters.project_ball_V(V, R, x)
    assert V.norm(out) == pytest.approx(R, abs=1e-12)
    np.testing.assert_allclose(out / np.linalg.norm(out), x / np.linalg.norm(x))


def test_projection_moves_closer_to_every_ball_point():
    # V(P_B x - b) <= V(x - b) for all b in the ball
    P = observation.coordinate_projection(5, [0, 2])
    V = filters.VNorm.euclidean_plus_observed(P)
    R = 2.0
    rng = np.random.default_rng(3)
    for _ in range(2000):
        x = 5.0 * rng.standard_normal(5)
        b = rng.standard_normal(5)
        nb = V.norm(b)
        if nb > R:
            b *= 0.99 * R / nb
        px = filters.project_ball_V(V, R, x)
        assert V.value(px - b) <= V.value(x - b) + 1e-12


def test_projection_contraction_quadratic_norm():
    S = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])
    V = filters.VNorm.quadratic(S)
    R = 1.3
    rng = np.random.default_rng(4)
    for _ in range(2000):
        x = 4.0 * rng.standard_normal(3)
        b = rng.standard_normal(3)
        nb = V.norm(b)
        if nb > R:
            b *= 0.99 * R / nb
        px = filters.project_ball_V(V, R, x)
        assert V.value(px - b) <= V.value(x - b) + 1e-12


# ---------------------------------------------------------------------------
# observer updates


def test_zero_gain_is_pure_forecast():
    model, P, _ = l63_setup()
    z = np.array([0.4, -0.2, 1.0])
    y = P.apply(np.array([9.0, 0.0, 0.0]))
    out = filters.observer_step(model, P, filters.Gain.zero(), z, y, 0.01)
    np.testing.assert_array_equal(out, model.step(z, 0.01))


def test_full_observation_synchronizes_in_one_step():
    model, _, _ = l63_setup()
    P = observation.coordinate_projection(3, range(3))
    D = filters.Gain.identity_on_observed(P)
    v = np.array([1.0, 2.0, 3.0])
    v_next = model.step(v, 0.01)
    z = np.array([-5.0, 4.0, 0.0])
    out = filters.observer_step(model, P, D, z, v_next, 0.01)
    np.testing.assert_array_equal(out, v_next)


def test_observer_rejects_contaminated_observation():
    model, P, _ = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    y_bad = np.array([1.0, 0.5, 0.0])  # energy on an unobserved coordinate
    with pytest.raises(ValueError):
        filters.observer_step(model, P, D, np.zeros(3), y_bad, 0.01)


def test_noise_free_synchronization_decay():
    # observing one coordinate with unit gain pulls the full state onto the signal
    model, P, _ = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    rng = np.random.default_rng(5)
    v = rng.standard_normal(3)
    z = rng.standard_normal(3) + 5.0
    h = 0.01
    err0 = np.linalg.norm(v - z)
    for _ in range(2000):
        v_next = model.step(v, h)
        y = P.apply(v_next)
        z = filters.observer_step(model, P, D, z, y, h)
        v = v_next
    assert np.linalg.norm(v - z) < 1e-6 * err0


def test_error_recursion_identity():
    # v' - z' = (I - D P)(Psi(v) - Psi(z)) - eps D w, with w recorded
    model, P, noise = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    rng = np.random.default_rng(6)
    v = rng.standard_normal(3)
    z = rng.standard_normal(3)
    eps = 0.3
    h = 0.01
    for _ in range(50):
        w = noise.sample(rng)
        v_next = model.step(v, h)
        y = P.apply(v_next) + eps * w
        z_next = filters.observer_step(model, P, D, z, y, h)
        lhs = v_next - z_next
        delta_psi = model.step(v, h) - model.step(z, h)
        rhs = delta_psi - D.apply(P.apply(delta_psi)) - eps * D.apply(w)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        v, z = v_next, z_next


def test_truncated_matches_plain_inside_ball():
    model, P, noise = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    V = filters.VNorm.euclidean_plus_observed(P)
    R = filters.default_ball_radius(model)
    rng = np.random.default_rng(7)
    m = rng.standard_normal(3)
    v = rng.standard_normal(3)
    h = 0.01
    for _ in range(100):
        v = model.step(v, h)
        y = P.apply(v) + 0.05 * noise.sample(rng)
        plain = filters.observer_step(model, P, D, m, y, h)
        trunc = filters.truncated_observer_step(model, P, D, V, R, m, y, h)
        np.testing.assert_array_equal(plain, trunc)
        m = trunc


def test_outlier_observation_is_pinned_to_ball_surface():
    model, P, noise = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    V = filters.VNorm.euclidean_plus_observed(P)
    R = filters.default_ball_radius(model)
    m = np.zeros(3)
    w_spike = np.array([1e3, 0.0, 0.0])
    y = P.apply(model.step(np.ones(3), 0.01)) + w_spike
    out = filters.truncated_observer_step(model, P, D, V, R, m, y, 0.01)
    assert V.norm(out) == pytest.approx(R, rel=1e-12)


def test_default_ball_radius_values():
    model, P, _ = l63_setup()
    r = dynamics.absorbing_radius(model)
    assert filters.default_ball_radius(model) == pytest.approx(np.sqrt(2.0) * r)


# ---------------------------------------------------------------------------
# fixed 3DVAR gain


def test_kalman_gain_scalar_blend():
    P = observation.coordinate_projection(2, [0])
    gamma = np.diag([1.0, 0.0])
    sigma2 = 0.7
    eps = 0.4
    K = filters.kalman_gain_3dvar(sigma2 * np.eye(2), P, gamma, eps)
    expected = sigma2 / (sigma2 + eps**2)
    np.testing.assert_allclose(
        K.apply(np.array([1.0, 0.0])), [expected, 0.0], rtol=1e-12
    )


def test_kalman_gain_noise_limits():
    P = observation.coordinate_projection(2, [0])
    gamma = np.diag([1.0, 0.0])
    K0 = filters.kalman_gain_3dvar(np.eye(2), P, gamma, 1e-9)
    np.testing.assert_allclose(K0.apply(np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-12)
    Kinf = filters.kalman_gain_3dvar(np.eye(2), P, gamma, 1e9)
    np.testing.assert_allclose(Kinf.apply(np.array([1.0, 0.0])), [0.0, 0.0], atol=1e-12)


def test_kalman_gain_singular_innovation():
    P = observation.coordinate_projection(2, [0])
    with pytest.raises(filters.FilterNumericsError):
        filters.kalman_gain_3dvar(np.zeros((2, 2)), P, np.zeros((2, 2)), 0.0)


def test_induced_filter_matches_displayed_update():
    model, P, noise = l63_setup()
    gamma = np.diag([1.0, 0.0, 0.0])
    eps = 0.2
    K = filters.kalman_gain_3dvar(0.5 * np.eye(3), P, gamma, eps)
    z = np.array([0.1, 0.2, 0.3])
    y = P.apply(np.array([2.0, 0.0, 0.0]))
    out = filters.observer_step(model, P, K, z, y, 0.01)
    fz = model.step(z, 0.01)
    Kmat = K._matrix
    Pmat = P.matrix()
    expected = (np.eye(3) - Kmat @ Pmat) @ fz + Kmat @ y
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------------------
# Kalman filter for linear signals


def test_scalar_steady_state_covariance():
    # c' = l^2 c eps^2 / (l^2 c + eps^2); for l > 1 the fixed point is
    # eps^2 (1 - 1/l^2), reached from any positive start
    P = observation.coordinate_projection(1, [0])
    gamma = np.eye(1)
    L = np.array([[2.0]])
    eps = 0.3
    mean, cov = np.zeros(1), np.eye(1)
    for _ in range(200):
        mean, cov = filters.kalman_filter_step(
            L, P, gamma, eps, mean, cov, np.zeros(1)
        )
    assert cov[0, 0] == pytest.approx(eps**2 * (1.0 - 0.25), rel=1e-10)


def test_neutral_scalar_covariance_decays():
    P = observation.coordinate_projection(1, [0])
    L = np.eye(1)
    eps = 1.0
    mean, cov = np.zeros(1), np.eye(1)
    traces = []
    for _ in range(500):
        mean, cov = filters.kalman_filter_step(L, P, np.eye(1), eps, mean, cov, np.zeros(1))
        traces.append(cov[0, 0])
    assert traces[-1] < 3e-3  # ~ eps^2/j decay to zero
    assert traces[-1] < traces[100] < traces[10]


def test_unobserved_unstable_direction_diverges():
    P = observation.coordinate_projection(2, [1])
    L = np.diag([2.0, 0.5])
    gamma = np.diag([0.0, 1.0])
    mean, cov = np.zeros(2), np.eye(2)
    for _ in range(40):
        mean, cov = filters.kalman_filter_step(L, P, gamma, 0.1, mean, cov, np.zeros(2))
    assert cov[0, 0] > 1e6


def test_covariance_trace_scales_quadratically_in_eps():
    P = observation.coordinate_projection(2, [0])
    L = rotation(np.pi / 4, scale=1.01)
    gamma = np.diag([1.0, 0.0])
    ratios = []
    for eps in (1.0, 0.1, 0.01):
        mean, cov = np.zeros(2), np.eye(2)
        for _ in range(400):
            mean, cov = filters.kalman_filter_step(
                L, P, gamma, eps, mean, cov, np.zeros(2)
            )
        ratios.append(np.trace(cov) / eps**2)
    assert max(ratios) / min(ratios) < 1.05


def test_covariance_ignores_observations():
    P = observation.coordinate_projection(2, [0])
    L = rotation(0.3, scale=0.95)
    gamma = np.diag([1.0, 0.0])
    traces = []
    for seed in (0, 1):
        rng = np.random.default_rng(seed)
        ys = np.zeros((30, 2))
        ys[:, 0] = rng.standard_normal(30)
        obs = ObservationSequence(eps=0.5, h=1.0, ys=ys)
        run = filters.run_kalman(L, P, gamma, 0.5, np.zeros(2), np.eye(2), obs)
        traces.append(run.cov_traces)
    np.testing.assert_array_equal(traces[0], traces[1])


def test_joseph_form_tolerates_deterministic_start():
    P = observation.coordinate_projection(2, [0])
    L = rotation(0.2)
    gamma = np.diag([1.0, 0.0])
    mean, cov = np.ones(2), np.zeros((2, 2))
    mean, cov = filters.kalman_filter_step(L, P, gamma, 0.5, mean, cov, np.zeros(2))
    assert np.all(np.isfinite(cov))
    evals = np.linalg.eigvalsh(cov)
    assert evals.min() >= -1e-14


# ---------------------------------------------------------------------------
# particle filter


def make_linear_gaussian(seed, n_steps=30, eps=0.5):
    L = rotation(0.4, scale=0.97)
    model = DiscreteMapModel(L)
    P = observation.coordinate_projection(2, [0])
    noise = observation.GaussianObservedNoise(P)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(2)
    truth = [v]
    ys = []
    for _ in range(n_steps):
        v = L @ v
        truth.append(v)
        ys.append(P.apply(v) + eps * noise.sample(rng))
    return L, model, P, noise, np.array(truth), ObservationSequence(eps=eps, h=1.0, ys=np.array(ys))


def test_particle_filter_matches_kalman_oracle():
    L, model, P, noise, truth, obs = make_linear_gaussian(8)
    gamma = np.diag([1.0, 0.0])
    kf = filters.run_kalman(L, P, gamma, obs.eps, np.zeros(2), np.eye(2), obs)
    init = observation.standard_normal_init(2)
    pf = filters.particle_filter(
        model, P, noise, obs.eps, 100_000, init, obs, np.random.default_rng(9)
    )
    assert pf.degenerate_at is None
    # posterior spread / sqrt(ESS) bounds the Monte Carlo error of the mean
    for j in (10, 20, 30):
        se = np.sqrt(pf.post_trace[j] / pf.ess[j])
        gap = np.linalg.norm(pf.estimates[j] - kf.estimates[j])
        assert gap < 4.0 * se + 1e-3
    # posterior variance matches the exact filter covariance trace
    for j in (10, 20, 30):
        assert pf.post_trace[j] == pytest.approx(kf.cov_traces[j], rel=0.15)


def test_flat_likelihood_reduces_to_pushforward():
    L, model, P, noise, truth, obs = make_linear_gaussian(10, n_steps=10)
    flat = ObservationSequence(eps=1e8, h=1.0, ys=obs.ys)
    init = observation.standard_normal_init(2)
    pf = filters.particle_filter(
        model, P, noise, flat.eps, 5000, init, flat, np.random.default_rng(11)
    )
    ensemble = init(np.random.default_rng(11).spawn(0) or np.random.default_rng(11), 5000)
    # replicate the internal draw: same rng consumed the same way
    rng = np.random.default_rng(11)
    ensemble = init(rng, 5000)
    for j in range(1, 11):
        ensemble = model.step_batch(ensemble, 1.0)
        np.testing.assert_allclose(pf.estimates[j], ensemble.mean(axis=0), rtol=1e-6)


def test_particle_filter_requires_noise_and_particles():
    L, model, P, noise, truth, obs = make_linear_gaussian(12, n_steps=3)
    init = observation.standard_normal_init(2)
    with pytest.raises(ValueError):
        filters.particle_filter(model, P, noise, 0.0, 100, init, obs, np.random.default_rng(0))
    with pytest.raises(ValueError):
        filters.particle_filter(model, P, noise, 0.5, 1, init, obs, np.random.default_rng(0))


def test_degenerate_weights_flagged():
    L, model, P, noise, truth, obs = make_linear_gaussian(13, n_steps=5)
    ys = obs.ys.copy()
    ys[2, 0] = 1e300  # unreachable observation at machine scale
    bad = ObservationSequence(eps=1e-3, h=1.0, ys=ys)
    init = observation.standard_normal_init(2)
    pf = filters.particle_filter(
        model, P, noise, bad.eps, 200, init, bad, np.random.default_rng(14)
    )
    assert pf.degenerate_at == 3


def test_coincident_particles_have_zero_spread():
    L, model, P, noise, truth, obs = make_linear_gaussian(15, n_steps=4)

    def degenerate_init(rng, size=None):
        n = 1 if size is None else size
        return np.zeros((n, 2))

    pf = filters.particle_filter(
        model, P, noise, obs.eps, 2, degenerate_init, obs, np.random.default_rng(16)
    )
    np.testing.assert_allclose(pf.post_trace, np.zeros(5), atol=1e-30)


def test_estimates_are_observation_measurable():
    # identical observations, different truth stream -> identical estimates
    model, P, noise = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    V = filters.VNorm.euclidean_plus_observed(P)
    init = observation.standard_normal_init(3)
    rng = np.random.default_rng(17)
    truth, obs = observation.generate_truth_and_observations(
        dynamics.lorenz63(), P, noise, init, 0.2, 40, 0.01, rng
    )
    other_truth = truth + 123.0  # replay against an unrelated truth
    runs = []
    for t in (truth, other_truth):
        run = filters.run_observer(
            dynamics.lorenz63(), P, D, np.zeros(3), obs,
            vnorm=V, radius=filters.default_ball_radius(dynamics.lorenz63()),
            truth=t,
        )
        runs.append(run.estimates)
    np.testing.assert_array_equal(runs[0], runs[1])

    pf_runs = []
    for _ in range(2):
        pf = filters.particle_filter(
            dynamics.lorenz63(), P, noise, 0.2, 500, init, obs,
            np.random.default_rng(99),
        )
        pf_runs.append(pf.estimates)
    np.testing.assert_array_equal(pf_runs[0], pf_runs[1])


def test_systematic_resample_preserves_distribution():
    rng = np.random.default_rng(18)
    w = rng.uniform(size=1000)
    w /= w.sum()
    idx = filters.systematic_resample(rng, w)
    counts = np.bincount(idx, minlength=1000) / 1000.0
    # systematic resampling keeps counts within 1/N of expectation
    assert np.abs(counts - w).max() <= 1.0 / 1000.0 + 1e-12


def test_export_filter_run_round_trip_columns(tmp_path):
    model, P, noise = l63_setup()
    D = filters.Gain.identity_on_observed(P)
    init = observation.standard_normal_init(3)
    rng = np.random.default_rng(19)
    truth, obs = observation.generate_truth_and_observations(
        model, P, noise, init, 0.2, 10, 0.01, rng
    )
    run = filters.run_observer(model, P, D, np.zeros(3), obs, truth=truth)
    path = tmp_path / "run.csv"
    filters.export_filter_run(run, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "j,m0,m1,m2,sq_error"
    assert len(lines) == 12
