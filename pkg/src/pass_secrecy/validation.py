"""Fast self-checks of the solvers against independent oracles.

Used by ``pass-secrecy validate``; each check returns ``(name, ok, detail)``.
"""
from __future__ import annotations

import numpy as np

from .baselines import zf_beamformers
from .geometry import EffectiveChannels, Scene, effective_channels
from . import multi_user as mu
from .single_user import SuChannelPair, closed_form_secrecy, eigen_secrecy_rate, su_gradient, su_objective


def _random_su_pair(rng, n):
    hb = rng.normal(size=n) + 1j * rng.normal(size=n)
    he = rng.normal(size=n) + 1j * rng.normal(size=n)
    return SuChannelPair(hb, he, 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2))


def random_scene(rng, n=4, k=1, j=1, pas=1, side=30.0, power=0.1):
    half = side / 2
    return Scene.build(
        rng.uniform(-half, half, (k, 2)),
        rng.uniform(-half, half, (j, 2)),
        num_waveguides=n,
        side_length=side,
        power_budget=power,
        pas_per_waveguide=pas,
        pa_x=None if pas > 1 else rng.uniform(-half, half, n),
    )


def check_closed_form(rng, trials=200):
    worst = 0.0
    for _ in range(trials):
        ch = _random_su_pair(rng, int(rng.choice([2, 4, 8])))
        worst = max(worst, abs(closed_form_secrecy(ch)[0] - eigen_secrecy_rate(ch)))
    return "closed-form secrecy rate vs eigen-solver", worst < 1e-9, f"max abs error {worst:.2e}"


def check_gradient(rng, trials=20, step=1e-6):
    worst = 0.0
    for _ in range(trials):
        scene = random_scene(rng)
        x = scene.pa_x
        n = int(rng.integers(scene.num_waveguides))
        xp, xm = x.copy(), x.copy()
        xp[n] += step
        xm[n] -= step
        fd = (su_objective(scene, xp) - su_objective(scene, xm)) / (2 * step)
        g = su_gradient(scene, x, n)
        worst = max(worst, abs(g - fd) / max(abs(fd), 1e-300))
    return "analytic position gradient vs central differences", worst < 1e-5, f"max rel error {worst:.2e}"


def check_surrogates(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        scene = random_scene(rng, n=4, k=3, j=2, pas=2, power=1e-3)
        ch = effective_channels(scene)
        W = mu.mrt_initializer(ch, scene.power_budget) * rng.uniform(0.1, 1.0, ch.num_bobs)
        weights = rng.uniform(0.5, 1.5, ch.num_bobs)
        gamma, big_gamma = mu.sinr_terms(ch, W)
        tau = mu.update_tau(gamma, big_gamma, weights)
        fp = mu.fp_state(ch, W, tau, scene.power_budget)
        vals = [
            mu.tau_objective(ch, W, tau),
            mu.split_objective(ch, W, tau, scene.power_budget),
            mu.dual_objective(ch, W, tau, fp.mu, fp.nu, scene.power_budget),
            mu.quadratic_objective(ch, W, tau, fp.mu, fp.nu, fp.xi, scene.power_budget),
        ]
        worst = max(worst, float(np.ptp(vals)))
    return "fractional-programming surrogate chain", worst < 1e-9, f"max spread {worst:.2e}"


def check_kkt(rng, trials=20):
    worst_res, worst_pow = 0.0, 0.0
    for _ in range(trials):
        scene = random_scene(rng, n=6, k=3, j=2, power=10 ** rng.uniform(-5, -2))
        ch = effective_channels(scene)
        W = mu.mrt_initializer(ch, scene.power_budget) / np.sqrt(ch.num_bobs)
        tau = np.ones(ch.num_bobs)
        fp = mu.fp_state(ch, W, tau, scene.power_budget)
        lam, W = mu.bisect_lambda(ch, fp, scene.power_budget)
        scale = max(np.abs(fp.tau * (1 + fp.mu) * fp.xi).max() * np.linalg.norm(ch.H_b, axis=0).max(), 1.0)
        worst_res = max(worst_res, float(mu.kkt_residual(ch, fp, W, lam, scene.power_budget).max() / scale))
        p = float(np.sum(np.abs(W) ** 2))
        if lam > 0:
            worst_pow = max(worst_pow, abs(p - scene.power_budget) / scene.power_budget)
        elif p > scene.power_budget:
            worst_pow = max(worst_pow, (p - scene.power_budget) / scene.power_budget)
    ok = worst_res < 1e-8 and worst_pow <= 1e-6
    return "beamformer KKT stationarity and power", ok, f"residual {worst_res:.2e}, power gap {worst_pow:.2e}"


def check_zf(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        n, k = 6, 3
        hb = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        ch = EffectiveChannels(hb, np.zeros((n, 0), dtype=complex))
        W = zf_beamformers(ch, 1.0)
        g = np.abs(hb.T @ W)
        worst = max(worst, float((g - np.diag(np.diag(g))).max() / g.max()))
    return "zero-forcing orthogonality", worst < 1e-9, f"max leakage {worst:.2e}"


CHECKS = (check_closed_form, check_gradient, check_surrogates, check_kkt, check_zf)


def run_checks(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]
