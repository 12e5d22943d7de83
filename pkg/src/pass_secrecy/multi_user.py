"""Weighted secrecy sum-rate (WSSR) maximization with multiple Bobs and Eves.

The FP-BCD loop alternates between

* closed-form auxiliary variables (``tau``, ``mu``, ``nu``, ``xi``),
* the baseband beamformers, solved from the KKT conditions with a bisection
  on the power multiplier ``lambda``, and
* a Gauss-Seidel sweep over PA positions, each one a 1-D grid search.

Channels passed to these routines are noise-normalized. Surrogate objectives
are evaluated in nats so that the Lagrangian-dual and quadratic transforms
stay exact; :func:`wssr` reports bits/s/Hz.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, InvalidParameterError, NumericalFailureError
from .geometry import EffectiveChannels, Scene, effective_channels, pa_phasors

LN2 = math.log(2.0)


@dataclass
class FpState:
    tau: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    lam: float = 0.0


@dataclass
class FpBcdConfig:
    n_samples: int = 2000
    max_iters: int = 50
    tol: float = 1e-4
    bisection_tol: float = 1e-6
    keep_incumbent: bool = True
    monotone_slack: float = 1e-6
    # True: start from MRT with P_T / K per user instead of P_T per user
    split_init_power: bool = False


@dataclass
class WssrResult:
    W: np.ndarray
    pa_x: np.ndarray
    wssr: float
    per_user_rates: np.ndarray
    trace: list = field(default_factory=list)
    init_wssr: float = 0.0
    iterations: int = 0
    converged: bool = False
    lambdas: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# rates and auxiliary variables


def link_gains(ch: EffectiveChannels, W):
    """``|h_k^T w_i|^2`` as a ``K x K`` matrix and ``|h_j^T w_i|^2`` as ``J x K``."""
    W = np.asarray(W, dtype=complex)
    if W.shape != (ch.num_antennas, ch.num_bobs):
        raise InvalidParameterError(f"beamformer shape {W.shape} does not match channels")
    gb = np.abs(ch.H_b.T @ W) ** 2
    ge = np.abs(ch.H_e.T @ W) ** 2
    return gb, ge


def sinr_terms(ch: EffectiveChannels, W):
    """Bob SINRs ``gamma_k`` and aggregated Eve SNRs ``Gamma_k``."""
    gb, ge = link_gains(ch, W)
    signal = np.diag(gb)
    interference = gb.sum(axis=1) - signal
    return signal / (interference + 1.0), ge.sum(axis=0)


def wssr(ch: EffectiveChannels, W, weights):
    """Weighted secrecy sum-rate in bits/s/Hz and the per-user secrecy rates."""
    gamma, big_gamma = sinr_terms(ch, W)
    per_user = np.maximum((np.log1p(gamma) - np.log1p(big_gamma)) / LN2, 0.0)
    return float(np.dot(np.asarray(weights, dtype=float), per_user)), per_user


def g_gamma(ch: EffectiveChannels, power_budget: float) -> float:
    """Cauchy-Schwarz bound ``P_T sum_j ||h_j||^2`` on every ``Gamma_k``."""
    return float(power_budget * np.sum(np.abs(ch.H_e) ** 2))


def update_tau(gamma, big_gamma, weights):
    return np.where(np.asarray(gamma) >= np.asarray(big_gamma), np.asarray(weights, dtype=float), 0.0)


def update_mu(ch: EffectiveChannels, W):
    return sinr_terms(ch, W)[0]


def update_nu(big_gamma, g_bound: float):
    big_gamma = np.asarray(big_gamma, dtype=float)
    return (g_bound - big_gamma) / (1.0 + big_gamma)


def update_xi(ch: EffectiveChannels, W):
    proj = ch.H_b.T @ np.asarray(W, dtype=complex)
    return np.diag(proj) / (1.0 + np.sum(np.abs(proj) ** 2, axis=1))


def fp_state(ch: EffectiveChannels, W, tau, power_budget: float) -> FpState:
    """Optimal ``mu, nu, xi`` for the given beamformers and ``tau``."""
    _, big_gamma = sinr_terms(ch, W)
    return FpState(
        tau=np.asarray(tau, dtype=float).copy(),
        mu=update_mu(ch, W),
        nu=update_nu(big_gamma, g_gamma(ch, power_budget)),
        xi=update_xi(ch, W),
    )


# ---------------------------------------------------------------------------
# surrogate objectives (nats); each equals the previous one at optimal auxiliaries


def tau_objective(ch, W, tau):
    gamma, big_gamma = sinr_terms(ch, W)
    return float(np.dot(tau, np.log1p(gamma) - np.log1p(big_gamma)))


def split_objective(ch, W, tau, power_budget):
    gamma, big_gamma = sinr_terms(ch, W)
    g = g_gamma(ch, power_budget)
    terms = np.log1p(gamma) + np.log1p((g - big_gamma) / (1 + big_gamma)) - math.log1p(g)
    return float(np.dot(tau, terms))


def _eve_terms(ch, W, nu, power_budget):
    _, big_gamma = sinr_terms(ch, W)
    g = g_gamma(ch, power_budget)
    nu = np.asarray(nu, dtype=float)
    return np.log1p(nu) - nu + (1 + nu) * (g - big_gamma) / (1 + g) - math.log1p(g)


def dual_objective(ch, W, tau, mu, nu, power_budget):
    gb, _ = link_gains(ch, W)
    mu = np.asarray(mu, dtype=float)
    frac = np.diag(gb) / (1 + gb.sum(axis=1))
    bob = np.log1p(mu) - mu + (1 + mu) * frac
    return float(np.dot(tau, bob + _eve_terms(ch, W, nu, power_budget)))


def quadratic_objective(ch, W, tau, mu, nu, xi, power_budget):
    proj = ch.H_b.T @ np.asarray(W, dtype=complex)
    mu = np.asarray(mu, dtype=float)
    xi = np.asarray(xi, dtype=complex)
    quad = 2 * (xi.conj() * np.diag(proj)).real - np.abs(xi) ** 2 * (1 + np.sum(np.abs(proj) ** 2, axis=1))
    bob = np.log1p(mu) - mu + (1 + mu) * quad
    return float(np.dot(tau, bob + _eve_terms(ch, W, nu, power_budget)))


# ---------------------------------------------------------------------------
# baseband beamformer (W-step)


class _BeamSystem:
    """Per-user eigendecompositions of the W-step normal equations.

    ``w_k(lam) = (M_k + lam I)^{-1} r_k`` with ``M_k`` Hermitian PSD, so each
    solution and its power are cheap for any ``lam`` once ``M_k`` is diagonalized.
    """

    null_rtol = 1e-10
    proj_rtol = 1e-8

    def __init__(self, ch: EffectiveChannels, fp: FpState, power_budget: float):
        hb, he = ch.H_b, ch.H_e
        coef = fp.tau * (1 + fp.mu) * np.abs(fp.xi) ** 2
        shared = (hb.conj() * coef[None, :]) @ hb.T
        eve = he.conj() @ he.T
        scale = (1 + fp.nu) / (1 + g_gamma(ch, power_budget))
        self.mats = [shared + s * eve for s in scale]
        self.rhs = (fp.tau * (1 + fp.mu) * fp.xi)[None, :] * hb.conj()
        self.vals, self.proj, self.vecs = [], [], []
        for k, m in enumerate(self.mats):
            try:
                d, u = np.linalg.eigh(0.5 * (m + m.conj().T))
            except np.linalg.LinAlgError as exc:
                raise NumericalFailureError(str(exc)) from exc
            self.vals.append(np.maximum(d, 0.0))
            self.vecs.append(u)
            self.proj.append(u.conj().T @ self.rhs[:, k])

    def _coeffs(self, k: int, lam: float):
        d, z = self.vals[k], self.proj[k]
        if lam > 0:
            return z / (d + lam)
        null = d <= self.null_rtol * max(d.max(initial=0.0), np.finfo(float).tiny)
        rnorm = np.linalg.norm(self.rhs[:, k])
        if np.any(np.abs(z[null]) > self.proj_rtol * rnorm):
            raise NumericalFailureError("W-step system is singular at lambda = 0")
        out = np.zeros_like(z)
        out[~null] = z[~null] / d[~null]
        return out

    def beamformers(self, lam: float) -> np.ndarray:
        cols = [self.vecs[k] @ self._coeffs(k, lam) for k in range(len(self.mats))]
        return np.column_stack(cols) if cols else np.zeros((self.rhs.shape[0], 0), dtype=complex)

    def power(self, lam: float) -> float:
        try:
            return float(sum(np.sum(np.abs(self._coeffs(k, lam)) ** 2) for k in range(len(self.mats))))
        except NumericalFailureError:
            return math.inf


def update_w(ch: EffectiveChannels, fp: FpState, lam: float, power_budget: float) -> np.ndarray:
    """Closed-form beamformers for a fixed multiplier ``lam >= 0``."""
    if lam < 0:
        raise InvalidParameterError("lambda must be non-negative")
    return _BeamSystem(ch, fp, power_budget).beamformers(lam)


def bisect_lambda(
    ch: EffectiveChannels,
    fp: FpState,
    power_budget: float,
    eps: float = 1e-6,
    *,
    lam_hi: float = 1.0,
    max_doublings: int = 200,
    max_bisections: int = 500,
):
    """Smallest-norm feasible multiplier: ``lam = 0`` if the unconstrained
    solution fits the budget, otherwise total power in ``[(1-eps) P_T, P_T]``."""
    if not eps > 0:
        raise InvalidParameterError("bisection tolerance must be positive")
    system = _BeamSystem(ch, fp, power_budget)
    if system.power(0.0) <= power_budget:
        return 0.0, system.beamformers(0.0)
    lo, hi = 0.0, lam_hi
    doublings = 0
    while system.power(hi) > power_budget:
        lo, hi = hi, 2 * hi
        doublings += 1
        if doublings > max_doublings:
            raise NumericalFailureError("could not bracket the power multiplier")
    for _ in range(max_bisections):
        p_hi = system.power(hi)
        if p_hi >= (1 - eps) * power_budget:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if system.power(mid) > power_budget:
            lo = mid
        else:
            hi = mid
    return hi, system.beamformers(hi)


def kkt_residual(ch: EffectiveChannels, fp: FpState, W, lam: float, power_budget: float) -> np.ndarray:
    """Norm of the Lagrangian gradient with respect to each ``w_k``."""
    system = _BeamSystem(ch, fp, power_budget)
    W = np.asarray(W, dtype=complex)
    n = W.shape[0]
    res = [
        np.linalg.norm((system.mats[k] + lam * np.eye(n)) @ W[:, k] - system.rhs[:, k])
        for k in range(W.shape[1])
    ]
    return np.array(res)


# ---------------------------------------------------------------------------
# position step (one PA at a time)


@dataclass
class PositionObjectiveContext:
    """Everything the single-PA objective needs besides the candidate ``x``."""

    m: int
    n: int
    E: np.ndarray
    F: np.ndarray
    J_mat: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    c1_bar: float
    c2_bar: float
    pi_b_const: np.ndarray
    pi_e_const: np.ndarray
    power_budget: float
    trace_tau: float

    @property
    def e_nn(self) -> float:
        return float(self.E[self.n, self.n].real)

    @property
    def j_nn(self) -> float:
        return float(self.J_mat[self.n, self.n].real)

    @property
    def eve_coef(self) -> float:
        return self.j_nn - self.power_budget * float(np.trace(self.C).real)


def normalized_phasors(scene: Scene, x, n: int):
    """Noise-normalized per-PA Bob and Eve contributions at coordinates ``x``."""
    pb = pa_phasors(scene, scene.bob_positions, x, n) / np.sqrt(scene.bob_noise)[:, None]
    pe = pa_phasors(scene, scene.eve_positions, x, n) / np.sqrt(scene.eve_noise)[:, None]
    return pb, pe


def build_position_context(scene: Scene, pa_x, W, fp: FpState, m: int, n: int) -> PositionObjectiveContext:
    """Assemble the single-PA objective for PA ``m`` (local index) on waveguide ``n``."""
    pa_x = np.asarray(pa_x, dtype=float)
    W = np.asarray(W, dtype=complex)
    p_total = scene.power_budget
    ch = effective_channels(scene, pa_x)
    hb_t, he_t = ch.H_b.T, ch.H_e.T  # K x N, J x N

    a_diag = fp.tau * (1 + fp.mu) * fp.xi
    b_diag = fp.tau * (1 + fp.mu) * np.abs(fp.xi) ** 2
    c_diag = fp.tau * (1 + fp.nu)
    E = W @ W.conj().T
    F = W * a_diag.conj()[None, :]
    J_mat = (W * c_diag[None, :]) @ W.conj().T

    a_n = b_diag * (hb_t.conj() @ E[n, :] - E[n, n] * hb_t[:, n].conj()) - F[n, :]
    b_n = he_t.conj() @ J_mat[n, :] - J_mat[n, n] * he_t[:, n].conj()
    rest = np.delete(np.arange(scene.num_waveguides), n)
    he_rest = he_t[:, rest]
    frob = float(np.sum(np.abs(he_rest) ** 2))
    tr_c = float(np.sum(c_diag))
    c1 = 1.0 + p_total * frob
    gram_rest = he_rest.conj().T @ he_rest
    c2 = float(np.sum(J_mat[np.ix_(rest, rest)] * gram_rest.T).real) - p_total * tr_c * frob

    sl = scene.pa_slice(n)
    others = np.delete(pa_x[sl], m)
    if others.size:
        pb, pe = normalized_phasors(scene, others, n)
        pi_b_const, pi_e_const = pb.sum(axis=1), pe.sum(axis=1)
    else:
        pi_b_const = np.zeros(scene.num_bobs, dtype=complex)
        pi_e_const = np.zeros(scene.num_eves, dtype=complex)

    eve_coef = float(J_mat[n, n].real) - p_total * tr_c
    a_bar = a_n + float(E[n, n].real) * b_diag * pi_b_const.conj()
    b_bar = b_n + eve_coef * pi_e_const.conj()
    c1_bar = c1 + p_total * float(np.sum(np.abs(pi_e_const) ** 2))
    c2_bar = c2 + eve_coef * float(np.sum(np.abs(pi_e_const) ** 2)) + 2 * float(np.dot(b_n, pi_e_const).real)

    ctx = PositionObjectiveContext(
        m=m,
        n=n,
        E=E,
        F=F,
        J_mat=J_mat,
        A=np.diag(a_diag),
        B=np.diag(b_diag),
        C=np.diag(c_diag),
        a_bar=a_bar,
        b_bar=b_bar,
        c1_bar=c1_bar,
        c2_bar=c2_bar,
        pi_b_const=pi_b_const,
        pi_e_const=pi_e_const,
        power_budget=p_total,
        trace_tau=float(np.sum(fp.tau)),
    )
    return ctx


def position_objective(ctx: PositionObjectiveContext, scene: Scene, x):
    """Single-PA objective (to be minimized); vectorized over candidate ``x``.

    Equals the full position-step objective minus terms that do not depend
    on this PA.
    """
    scalar = np.ndim(x) == 0
    pb, pe = normalized_phasors(scene, x, ctx.n)
    b_diag = np.diag(ctx.B).real
    quad_b = ctx.e_nn * np.sum(b_diag[:, None] * np.abs(pb) ** 2, axis=0)
    lin_b = 2 * (ctx.a_bar @ pb).real
    pe_sq = np.sum(np.abs(pe) ** 2, axis=0)
    denom = ctx.power_budget * (pe_sq + 2 * (ctx.pi_e_const.conj() @ pe).real) + ctx.c1_bar
    numer = ctx.eve_coef * pe_sq + 2 * (ctx.b_bar @ pe).real + ctx.c2_bar
    out = quad_b + lin_b + ctx.trace_tau * np.log(denom) + numer / denom
    return float(out[0]) if scalar else out


def candidate_grid(side_length: float, n_samples: int) -> np.ndarray:
    if n_samples < 2:
        raise InvalidParameterError("need at least two grid samples")
    return np.linspace(-side_length / 2, side_length / 2, n_samples)


def excluded_indices(placed, side_length: float, n_samples: int, min_spacing: float) -> np.ndarray:
    """Grid indices within the spacing guard of already-placed PAs."""
    step = side_length / (n_samples - 1)
    out = set()
    for xp in np.atleast_1d(placed):
        lo = math.floor((2 * xp + side_length - 2 * min_spacing) / (2 * step))
        hi = math.ceil((2 * xp + side_length + 2 * min_spacing) / (2 * step))
        out.update(range(max(lo, 0), min(hi, n_samples - 1) + 1))
    return np.array(sorted(out), dtype=int)


def one_dim_search(ctx: PositionObjectiveContext, scene: Scene, n_samples: int, pa_x=None, *, keep_incumbent=False):
    """Grid search for PA ``ctx.m`` on waveguide ``ctx.n``.

    Candidates within the minimum spacing of PAs ``m' < m`` on the same
    waveguide are removed. Ties resolve to the smallest grid index. With
    ``keep_incumbent`` the PA's current coordinate (taken from ``pa_x``) is
    retained unless a grid point is strictly better.
    Returns ``(x, objective value)``.
    """
    grid = candidate_grid(scene.side_length, n_samples)
    sl = scene.pa_slice(ctx.n)
    placed = np.array([]) if pa_x is None else np.asarray(pa_x, dtype=float)[sl][: ctx.m]
    mask = np.ones(n_samples, dtype=bool)
    if placed.size:
        mask[excluded_indices(placed, scene.side_length, n_samples, scene.min_spacing)] = False
        mask &= np.all(np.abs(grid[:, None] - placed[None, :]) > scene.min_spacing, axis=1)
    if not mask.any():
        raise InfeasibleError(f"no feasible grid position for PA {ctx.m} on waveguide {ctx.n}")
    idx = np.flatnonzero(mask)
    values = position_objective(ctx, scene, grid[idx])
    best = int(np.argmin(values))
    x_best, f_best = float(grid[idx[best]]), float(values[best])
    if keep_incumbent and pa_x is not None:
        x_cur = float(np.asarray(pa_x, dtype=float)[sl][ctx.m])
        ok = abs(x_cur) <= scene.side_length / 2 and np.all(np.abs(x_cur - placed) > scene.min_spacing)
        if ok:
            f_cur = position_objective(ctx, scene, x_cur)
            if f_cur <= f_best:
                return x_cur, f_cur
    return x_best, f_best


# ---------------------------------------------------------------------------
# main loop


def mrt_initializer(ch: EffectiveChannels, power_budget: float) -> np.ndarray:
    """``w_k = sqrt(P_T) h_k* / ||h_k||`` for every user (each at full power)."""
    norms = np.linalg.norm(ch.H_b, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    return math.sqrt(power_budget) * ch.H_b.conj() / norms[None, :]


def _fp_loop(ch, weights, power_budget, config: FpBcdConfig, position_step=None, W0=None):
    weights = np.asarray(weights, dtype=float)
    if W0 is None:
        W = mrt_initializer(ch, power_budget)
        if config.split_init_power:
            W = W / math.sqrt(ch.num_bobs)
    else:
        W = np.asarray(W0, dtype=complex)
    gamma, big_gamma = sinr_terms(ch, W)
    tau = update_tau(gamma, big_gamma, weights)
    init_rate, _ = wssr(ch, W, weights)
    trace, lambdas = [], []
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        fp = fp_state(ch, W, tau, power_budget)
        lam, W = bisect_lambda(ch, fp, power_budget, config.bisection_tol)
        fp.lam = lam
        lambdas.append(lam)
        if position_step is not None:
            ch = position_step(W, fp)
        gamma, big_gamma = sinr_terms(ch, W)
        tau = update_tau(gamma, big_gamma, weights)
        rate, _ = wssr(ch, W, weights)
        if trace:
            prev = trace[-1]
            if rate < prev - config.monotone_slack:
                warnings.warn(f"WSSR decreased from {prev:.9g} to {rate:.9g} at iteration {it}", RuntimeWarning)
            trace.append(rate)
            if rate - prev <= config.tol * abs(prev):
                converged = True
                break
        else:
            trace.append(rate)
    return ch, W, trace, init_rate, it, converged, lambdas


def fp_bcd(scene: Scene, config: FpBcdConfig | None = None) -> WssrResult:
    """Joint beamformer / PA-position optimization starting from ``scene.pa_x``."""
    config = config or FpBcdConfig()
    x = scene.pa_x.copy()
    ch0 = effective_channels(scene, x)

    def position_step(W, fp):
        nonlocal x
        for n in range(scene.num_waveguides):
            sl = scene.pa_slice(n)
            for m in range(scene.pas_per_waveguide[n]):
                ctx = build_position_context(scene, x, W, fp, m, n)
                x_new, _ = one_dim_search(ctx, scene, config.n_samples, x, keep_incumbent=config.keep_incumbent)
                x[sl.start + m] = x_new
        return effective_channels(scene, x)

    ch, W, trace, init_rate, it, converged, lambdas = _fp_loop(
        ch0, scene.weights, scene.power_budget, config, position_step
    )
    total, per_user = wssr(ch, W, scene.weights)
    return WssrResult(W, x.copy(), total, per_user, trace, init_rate, it, converged, lambdas)


def fp_beamforming(ch: EffectiveChannels, weights, power_budget: float, config: FpBcdConfig | None = None) -> WssrResult:
    """FP iterations over the beamformers only, for fixed channels."""
    config = config or FpBcdConfig()
    ch, W, trace, init_rate, it, converged, lambdas = _fp_loop(ch, weights, power_budget, config)
    total, per_user = wssr(ch, W, weights)
    return WssrResult(W, np.array([]), total, per_user, trace, init_rate, it, converged, lambdas)
