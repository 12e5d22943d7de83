import math

import numpy as np
import pytest

from pass_secrecy import multi_user as mu
from pass_secrecy.errors import InfeasibleError, NumericalFailureError
from pass_secrecy.geometry import EffectiveChannels, Scene, effective_channels, placement_feasible
from conftest import make_scene


def cmat(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_state(rng, n=4, k=3, j=2, pas=2, power=1e-4, weights=None):
    weights = np.ones(k) if weights is None else np.asarray(weights)
    scene = make_scene(rng, n=n, k=k, j=j, pas=pas, side=20.0, power=power, weights=weights)
    ch = effective_channels(scene)
    W = mu.mrt_initializer(ch, power) / math.sqrt(k) * rng.uniform(0.3, 1.0, k)
    gamma, big_gamma = mu.sinr_terms(ch, W)
    tau = mu.update_tau(gamma, big_gamma, weights)
    return scene, ch, W, mu.fp_state(ch, W, tau, power)


def naive_wssr(ch, W, weights):
    total = 0.0
    K, J = ch.num_bobs, ch.num_eves
    for k in range(K):
        sig = abs(sum(ch.H_b[n, k] * W[n, k] for n in range(ch.num_antennas))) ** 2
        interf = 0.0
        for i in range(K):
            if i != k:
                interf += abs(sum(ch.H_b[n, k] * W[n, i] for n in range(ch.num_antennas))) ** 2
        leak = 0.0
        for j in range(J):
            leak += abs(sum(ch.H_e[n, j] * W[n, k] for n in range(ch.num_antennas))) ** 2
        total += weights[k] * max(math.log2((1 + sig / (interf + 1)) / (1 + leak)), 0.0)
    return total


# --- rates --------------------------------------------------------------------


def test_wssr_single_user_example():
    ch = EffectiveChannels(np.array([[math.sqrt(3)]]), np.array([[1.0]]))
    total, per_user = mu.wssr(ch, np.array([[1.0]]), [1.0])
    assert total == pytest.approx(1.0, rel=1e-15)
    assert per_user[0] == pytest.approx(1.0, rel=1e-15)


def test_wssr_clamps_to_zero():
    ch = EffectiveChannels(np.array([[0.5, 0.1]]), np.array([[3.0]]))
    total, per_user = mu.wssr(ch, np.array([[1.0, 1.0]]), [1.0, 2.0])
    assert total == 0.0 and np.all(per_user == 0.0)


def test_wssr_matches_naive_loop(rng):
    for _ in range(10):
        ch = EffectiveChannels(cmat(rng, 4, 3), 0.3 * cmat(rng, 4, 2))
        W = cmat(rng, 4, 3)
        weights = rng.uniform(0.5, 2, 3)
        assert mu.wssr(ch, W, weights)[0] == pytest.approx(naive_wssr(ch, W, weights), abs=1e-12)


def test_wssr_rejects_shape_mismatch(rng):
    ch = EffectiveChannels(cmat(rng, 4, 3), cmat(rng, 4, 2))
    with pytest.raises(ValueError):
        mu.wssr(ch, cmat(rng, 3, 3), np.ones(3))


# --- auxiliary variables -------------------------------------------------------


def test_g_gamma_examples(rng):
    ch = EffectiveChannels(np.array([[1.0]]), np.array([[1.0 + 1.0j]]))
    assert mu.g_gamma(ch, 1.0) == pytest.approx(2.0)
    ch0 = EffectiveChannels(cmat(rng, 3, 2), np.zeros((3, 2), dtype=complex))
    assert mu.g_gamma(ch0, 1.0) == 0.0
    assert np.all(mu.update_nu(np.zeros(2), 0.0) == 0.0)


def test_g_gamma_bounds_every_eve_snr(rng):
    ch = EffectiveChannels(cmat(rng, 4, 3), cmat(rng, 4, 2))
    g = mu.g_gamma(ch, 2.0)
    for _ in range(1000):
        W = cmat(rng, 4, 3)
        W *= math.sqrt(2.0 * rng.uniform()) / np.linalg.norm(W)
        assert mu.sinr_terms(ch, W)[1].max() <= g * (1 + 1e-12)


def test_update_tau_cases():
    np.testing.assert_array_equal(mu.update_tau([2.0, 1.0, 0.5], [1.0, 1.0, 1.0], [0.7, 0.7, 0.7]), [0.7, 0.7, 0.0])


def test_update_mu_examples(rng):
    ch = EffectiveChannels(np.array([[math.sqrt(3)]]), np.zeros((1, 0)))
    assert mu.update_mu(ch, np.array([[1.0]]))[0] == pytest.approx(3.0)
    ch = EffectiveChannels(cmat(rng, 4, 3), cmat(rng, 4, 2))
    W = cmat(rng, 4, 3)
    W[:, 1] = 0
    m = mu.update_mu(ch, W)
    assert m[1] == 0.0
    np.testing.assert_allclose(m, mu.sinr_terms(ch, W)[0], rtol=1e-12)


def test_update_nu_examples():
    assert mu.update_nu([5.0], 5.0)[0] == 0.0
    assert mu.update_nu([0.0], 2.0)[0] == 2.0


def test_update_xi_examples(rng):
    ch = EffectiveChannels(np.array([[1.0 + 0j]]), np.zeros((1, 0)))
    assert mu.update_xi(ch, np.array([[1.0]]))[0] == pytest.approx(0.5)
    ch = EffectiveChannels(cmat(rng, 4, 3), cmat(rng, 4, 2))
    assert np.all(mu.update_xi(ch, np.zeros((4, 3))) == 0)


def test_surrogate_chain_is_tight(rng):
    for _ in range(20):
        scene, ch, W, fp = random_state(rng, weights=rng.uniform(0.5, 1.5, 3))
        p = scene.power_budget
        a = mu.tau_objective(ch, W, fp.tau)
        b = mu.split_objective(ch, W, fp.tau, p)
        c = mu.dual_objective(ch, W, fp.tau, fp.mu, fp.nu, p)
        d = mu.quadratic_objective(ch, W, fp.tau, fp.mu, fp.nu, fp.xi, p)
        assert max(a, b, c, d) - min(a, b, c, d) < 1e-9
        # in bits the tau objective is the WSSR whenever tau is optimal
        assert a / math.log(2) == pytest.approx(mu.wssr(ch, W, scene.weights)[0], abs=1e-9)


def test_auxiliaries_maximize_their_surrogates(rng):
    scene, ch, W, fp = random_state(rng)
    p = scene.power_budget
    best = mu.quadratic_objective(ch, W, fp.tau, fp.mu, fp.nu, fp.xi, p)
    for _ in range(200):
        mu_r = fp.mu * rng.uniform(0.5, 1.5, 3)
        nu_r = fp.nu * rng.uniform(0.5, 1.5, 3)
        xi_r = fp.xi * (1 + 0.3 * cmat(rng, 3))
        assert mu.quadratic_objective(ch, W, fp.tau, mu_r, fp.nu, fp.xi, p) <= best + 1e-12
        assert mu.quadratic_objective(ch, W, fp.tau, fp.mu, nu_r, fp.xi, p) <= best + 1e-12
        assert mu.quadratic_objective(ch, W, fp.tau, fp.mu, fp.nu, xi_r, p) <= best + 1e-12
        tau_r = rng.uniform(0, scene.weights)
        assert mu.tau_objective(ch, W, tau_r) <= mu.tau_objective(ch, W, fp.tau) + 1e-12


# --- beamformer step -------------------------------------------------------------


def test_update_w_zero_tau_gives_zero_beam(rng):
    scene, ch, W, fp = random_state(rng)
    fp.tau[1] = 0.0
    out = mu.update_w(ch, fp, 0.5, scene.power_budget)
    assert np.all(out[:, 1] == 0)


def test_update_w_vanishes_for_large_lambda(rng):
    scene, ch, W, fp = random_state(rng)
    lams = np.array([1e2, 1e6, 1e10, 1e14])
    norms = np.array([np.linalg.norm(mu.update_w(ch, fp, lam, scene.power_budget)) for lam in lams])
    assert np.all(np.diff(norms) < 0)
    # lambda I dominates: ||w|| decays like 1 / lambda
    assert norms[-1] * lams[-1] == pytest.approx(norms[-2] * lams[-2], rel=1e-3)


def test_update_w_is_stationary(rng):
    for _ in range(20):
        scene, ch, W, fp = random_state(rng)
        lam = 10 ** rng.uniform(-3, 3)
        out = mu.update_w(ch, fp, lam, scene.power_budget)
        assert mu.kkt_residual(ch, fp, out, lam, scene.power_budget).max() < 1e-8


def test_bisection_interior_solution(rng):
    # a generous budget leaves the unconstrained solution feasible
    scene, ch, W, fp = random_state(rng)
    unconstrained = np.sum(np.abs(mu.update_w(ch, fp, 0.0, scene.power_budget)) ** 2)
    lam, out = mu.bisect_lambda(ch, fp, 2 * unconstrained)
    assert lam == 0.0
    assert np.sum(np.abs(out) ** 2) <= 2 * unconstrained


def test_power_is_monotone_in_lambda(rng):
    scene, ch, W, fp = random_state(rng)
    powers = [np.sum(np.abs(mu.update_w(ch, fp, lam, scene.power_budget)) ** 2) for lam in np.logspace(-4, 4, 60)]
    assert np.all(np.diff(powers) <= 0)


def test_bisection_hits_budget(rng):
    for _ in range(20):
        scene, ch, W, fp = random_state(rng, power=10 ** rng.uniform(-5, -2))
        p = scene.power_budget
        lam, out = mu.bisect_lambda(ch, fp, p)
        total = np.sum(np.abs(out) ** 2)
        if lam > 0:
            assert abs(total - p) <= 1e-6 * p
        assert total <= p * (1 + 1e-8)


def test_bisection_bracket_failure(rng):
    scene, ch, W, fp = random_state(rng)
    with pytest.raises(NumericalFailureError):
        mu.bisect_lambda(ch, fp, scene.power_budget, lam_hi=1e-300, max_doublings=2)


# --- position step -----------------------------------------------------------------


def full_position_objective(ch, W, fp, power):
    """Position-step objective written out term by term (natural log)."""
    K = ch.num_bobs
    hb, he = ch.H_b, ch.H_e
    g = power * np.sum(np.abs(he) ** 2)
    total = 0.0
    for k in range(K):
        for i in range(K):
            total += fp.tau[i] * (1 + fp.mu[i]) * abs(fp.xi[i]) ** 2 * abs(hb[:, i] @ W[:, k]) ** 2
        total += fp.tau[k] * math.log1p(g)
        leak = np.sum(np.abs(he.T @ W[:, k]) ** 2)
        total -= fp.tau[k] * (1 + fp.nu[k]) * (g - leak) / (1 + g)
        total -= 2 * fp.tau[k] * (1 + fp.mu[k]) * (np.conj(fp.xi[k]) * (hb[:, k] @ W[:, k])).real
    return total


@pytest.mark.parametrize("pas", [1, 2, 3])
def test_position_objective_matches_full_objective(rng, pas):
    scene, ch, W, fp = random_state(rng, n=3, pas=pas)
    for n in range(scene.num_waveguides):
        for m in range(pas):
            ctx = mu.build_position_context(scene, scene.pa_x, W, fp, m, n)
            xs = rng.uniform(-10, 10, 12)
            diffs = []
            for x in xs:
                px = scene.pa_x.copy()
                px[scene.pa_slice(n).start + m] = x
                full = full_position_objective(effective_channels(scene, px), W, fp, scene.power_budget)
                diffs.append(full - mu.position_objective(ctx, scene, x))
            assert np.ptp(diffs) < 1e-9


def test_position_context_invariants(rng):
    scene, ch, W, fp = random_state(rng)
    ctx = mu.build_position_context(scene, scene.pa_x, W, fp, 1, 2)
    np.testing.assert_allclose(ctx.E, ctx.E.conj().T, atol=1e-15 * np.abs(ctx.E).max())
    np.testing.assert_allclose(ctx.J_mat, ctx.J_mat.conj().T, atol=1e-15 * np.abs(ctx.J_mat).max())
    assert ctx.c1_bar >= 1.0


def test_position_objective_vanishes_without_active_users(rng):
    scene, ch, W, fp = random_state(rng, k=1, j=1, pas=1)
    fp.tau[:] = 0.0
    ctx = mu.build_position_context(scene, scene.pa_x, W, fp, 0, 1)
    np.testing.assert_array_equal(mu.position_objective(ctx, scene, np.linspace(-10, 10, 7)), 0.0)


def test_position_objective_mirror_symmetry(rng):
    # users on the x = 0 line and feeds at x = 0: candidates +-x see identical geometry
    n = 3
    ys = np.array([-4.0, 1.0, 6.0])
    scene = Scene(
        pas_per_waveguide=(1,) * n,
        height=3.0,
        side_length=20.0,
        waveguide_y=ys,
        feed_points=np.column_stack([np.zeros(n), ys, np.full(n, 3.0)]),
        pa_x=[0.0, 2.0, -3.0],
        bob_positions=[[0.0, -7.0, 0.0], [0.0, 3.0, 0.0]],
        eve_positions=[[0.0, 8.0, 0.0]],
        carrier_wavelength=0.0107,
        guide_wavelength=0.0107 / 1.4,
        min_spacing=0.005,
        power_budget=1e-4,
        bob_noise=1e-12,
        eve_noise=1e-12,
        weights=1.0,
    )
    ch = effective_channels(scene)
    W = mu.mrt_initializer(ch, scene.power_budget) / 2
    fp = mu.fp_state(ch, W, np.ones(2), scene.power_budget)
    ctx = mu.build_position_context(scene, scene.pa_x, W, fp, 0, 0)
    for x in (0.37, 2.5, 7.1):
        a, b = mu.position_objective(ctx, scene, x), mu.position_objective(ctx, scene, -x)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_excluded_indices_cover_the_guard_band():
    side, ns, dmin = 10.0, 1001, 0.055
    grid = mu.candidate_grid(side, ns)
    for xp in (-5.0, -1.234, 0.0, 3.3333, 5.0):
        ex = set(mu.excluded_indices([xp], side, ns, dmin))
        close = set(np.flatnonzero(np.abs(grid - xp) <= dmin))
        assert close <= ex
        step = side / (ns - 1)
        assert all(abs(grid[i] - xp) <= dmin + step + 1e-12 for i in ex)


def test_one_dim_search_first_pa_has_no_exclusion(rng):
    scene, ch, W, fp = random_state(rng, pas=2)
    ctx = mu.build_position_context(scene, scene.pa_x, W, fp, 0, 1)
    x, val = mu.one_dim_search(ctx, scene, 301, scene.pa_x)
    grid = mu.candidate_grid(scene.side_length, 301)
    vals = mu.position_objective(ctx, scene, grid)
    assert x == grid[int(np.argmin(vals))] and val == vals.min()


def test_one_dim_search_synthetic_unimodal(rng, monkeypatch):
    scene, ch, W, fp = random_state(rng, pas=1)
    ctx = mu.build_position_context(scene, scene.pa_x, W, fp, 0, 0)
    grid = mu.candidate_grid(scene.side_length, 101)
    target = grid[37]
    monkeypatch.setattr(mu, "position_objective", lambda c, s, x: (np.asarray(x) - target) ** 2)
    assert mu.one_dim_search(ctx, scene, 101)[0] == target


def test_one_dim_search_matches_constrained_brute_force(rng):
    scene, ch, W, fp = random_state(rng, n=2, pas=3)
    ns = 2001
    grid = mu.candidate_grid(scene.side_length, ns)
    for m in range(3):
        ctx = mu.build_position_context(scene, scene.pa_x, W, fp, m, 1)
        x, val = mu.one_dim_search(ctx, scene, ns, scene.pa_x)
        placed = scene.pa_x[scene.pa_slice(1)][:m]
        excluded = mu.excluded_indices(placed, scene.side_length, ns, scene.min_spacing) if m else []
        keep = np.setdiff1d(np.arange(ns), excluded)
        vals = mu.position_objective(ctx, scene, grid[keep])
        assert val == pytest.approx(vals.min(), rel=1e-14, abs=1e-14)
        assert np.all(np.abs(x - placed) > scene.min_spacing)


def test_one_dim_search_infeasible(rng):
    scene = make_scene(rng, n=1, k=1, j=1, pas=2, side=0.02)
    ch = effective_channels(scene)
    W = mu.mrt_initializer(ch, scene.power_budget)
    fp = mu.fp_state(ch, W, np.ones(1), scene.power_budget)
    ctx = mu.build_position_context(scene, [0.0, 0.009], W, fp, 1, 0)
    with pytest.raises(InfeasibleError):
        mu.one_dim_search(ctx, scene, 3, np.array([0.0, 0.009]))


# --- full algorithm -----------------------------------------------------------------


def check_result(scene, res):
    assert np.sum(np.abs(res.W) ** 2) <= scene.power_budget * (1 + 1e-8)
    assert placement_feasible(res.pa_x, scene.pas_per_waveguide, scene.side_length, scene.min_spacing)
    recomputed = mu.wssr(effective_channels(scene, res.pa_x), res.W, scene.weights)[0]
    assert res.wssr == pytest.approx(recomputed, abs=1e-10)
    assert np.all(np.diff(res.trace) >= -1e-6)


def test_fp_bcd_minimal_instance_improves_on_init(rng):
    scene = make_scene(rng, n=1, k=1, j=1, pas=1, side=20.0, power=1e-3, pa_x=np.zeros(1))
    res = mu.fp_bcd(scene, mu.FpBcdConfig(n_samples=500))
    assert res.wssr >= res.init_wssr - 1e-12
    check_result(scene, res)


def test_fp_bcd_multi_pa(rng):
    scene = make_scene(rng, n=4, k=3, j=2, pas=2, side=30.0, power=1e-4)
    res = mu.fp_bcd(scene, mu.FpBcdConfig(n_samples=400, max_iters=15))
    check_result(scene, res)
    assert res.wssr > 0 and len(res.trace) == res.iterations


def test_fp_beamforming_reaches_single_user_optimum(rng):
    from pass_secrecy.single_user import SuChannelPair, closed_form_secrecy

    scene = make_scene(rng, n=3, k=1, j=1, side=10.0, power=1e-3)
    res = mu.fp_beamforming(effective_channels(scene), [1.0], scene.power_budget, mu.FpBcdConfig(max_iters=500, tol=1e-10))
    assert res.wssr == pytest.approx(closed_form_secrecy(SuChannelPair.from_scene(scene))[0], rel=1e-4)


def test_zero_rate_user_stays_silent(rng):
    # a Bob sitting on top of an Eve cannot get a positive rate
    scene = make_scene(rng, n=4, k=2, j=1, side=20.0, power=1e-4)
    scene = scene.replace(bob_positions=np.vstack([scene.bob_positions[0], scene.eve_positions[0]]))
    res = mu.fp_bcd(scene, mu.FpBcdConfig(n_samples=300, max_iters=10))
    assert res.per_user_rates[1] == 0.0
    check_result(scene, res)
