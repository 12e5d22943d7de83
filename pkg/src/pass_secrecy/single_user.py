"""Single-Bob / single-Eve secrecy beamforming with one PA per waveguide.

For fixed PA positions the optimal baseband beamformer is the principal
generalized eigenvector of ``(I + gb h_b* h_b^T, I + ge h_e* h_e^T)`` and the
secrecy rate has a closed form in three scalars ``a, b, c``. Positions are
then refined coordinate-wise by backtracking gradient ascent on

    f(x) = (b + sqrt(b^2 + 4ac)) / a,       rate = log2(1 + f / 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError
from .geometry import Scene, effective_channels, freespace_channel

LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class SuChannelPair:
    """Un-normalized Bob/Eve channels plus the SNR budgets ``P_T / sigma^2``."""

    h_b: np.ndarray
    h_e: np.ndarray
    gamma_b: float
    gamma_e: float

    def __post_init__(self):
        object.__setattr__(self, "h_b", np.asarray(self.h_b, dtype=complex).reshape(-1))
        object.__setattr__(self, "h_e", np.asarray(self.h_e, dtype=complex).reshape(-1))
        if self.h_b.shape != self.h_e.shape:
            raise InvalidParameterError("Bob and Eve channels must have the same length")
        if not (self.gamma_b > 0 and self.gamma_e > 0):
            raise InvalidParameterError("SNR budgets must be positive")
        if not (np.all(np.isfinite(self.h_b)) and np.all(np.isfinite(self.h_e))):
            raise InvalidParameterError("channels must be finite")

    @classmethod
    def from_scene(cls, scene: Scene, pa_x=None) -> "SuChannelPair":
        _check_single_user(scene)
        ch = effective_channels(scene, pa_x, normalize=False)
        p = scene.power_budget
        return cls(ch.H_b[:, 0], ch.H_e[:, 0], p / scene.bob_noise[0], p / scene.eve_noise[0])


@dataclass(frozen=True)
class AbcCoefficients:
    a: float
    b: float
    c: float


@dataclass
class SuSolution:
    v_star: np.ndarray
    w_star: np.ndarray
    secrecy_rate: float
    pa_x: np.ndarray
    objective_trace: list = field(default_factory=list)
    grad_norm_trace: list = field(default_factory=list)
    iterations: int = 0
    accepted_steps: int = 0


def _check_single_user(scene: Scene):
    if scene.num_bobs != 1 or scene.num_eves != 1:
        raise InvalidParameterError("single-user routines need exactly one Bob and one Eve")
    if any(m != 1 for m in scene.pas_per_waveguide):
        raise InvalidParameterError("single-user routines need one PA per waveguide")


def _gram_gap(u: np.ndarray, v: np.ndarray) -> float:
    # ||u||^2 ||v||^2 - |u^T v*|^2 as a sum of squares (Lagrange identity), never negative
    cross = np.outer(u, v)
    return 0.5 * float(np.sum(np.abs(cross - cross.T) ** 2))


def abc_coefficients(ch: SuChannelPair) -> AbcCoefficients:
    nb = float(np.vdot(ch.h_b, ch.h_b).real)
    ne = float(np.vdot(ch.h_e, ch.h_e).real)
    c = ch.gamma_b * ch.gamma_e * _gram_gap(ch.h_b, ch.h_e)
    a = 1.0 + ch.gamma_e * ne
    b = ch.gamma_b * nb - ch.gamma_e * ne + c
    return AbcCoefficients(a, b, c)


def _half_root(abc: AbcCoefficients) -> float:
    """``(b + sqrt(b^2 + 4ac)) / (2a)`` without cancellation for negative ``b``."""
    a, b, c = abc.a, abc.b, abc.c
    disc = math.sqrt(b * b + 4 * a * c)
    if b >= 0:
        return (b + disc) / (2 * a)
    if disc - b == 0:
        return 0.0
    return 2 * c / (disc - b)


def closed_form_secrecy(ch: SuChannelPair):
    """Maximum secrecy rate (bits/s/Hz) for fixed channels, and its ``a, b, c``."""
    abc = abc_coefficients(ch)
    return math.log1p(_half_root(abc)) / LN2, abc


def _inv_sqrt_rank_one(u: np.ndarray, g: float) -> np.ndarray:
    # (I + g u u^H)^{-1/2} via the rank-one closed form
    n = u.size
    nu = float(np.vdot(u, u).real)
    out = np.eye(n, dtype=complex)
    if nu == 0:
        return out
    return out + ((1 + g * nu) ** -0.5 - 1) * np.outer(u, u.conj()) / nu


def whitened_delta(ch: SuChannelPair):
    """Return ``(Delta, T)`` with ``T = (I + ge h_e* h_e^T)^{-1/2}``."""
    t = _inv_sqrt_rank_one(ch.h_e.conj(), ch.gamma_e)
    num = np.eye(ch.h_b.size, dtype=complex) + ch.gamma_b * np.outer(ch.h_b.conj(), ch.h_b)
    delta = t @ num @ t
    return 0.5 * (delta + delta.conj().T), t


def eigen_secrecy_rate(ch: SuChannelPair) -> float:
    """``log2`` of the principal eigenvalue of ``Delta`` (dense eigen-solver)."""
    delta, _ = whitened_delta(ch)
    try:
        vals = np.linalg.eigvalsh(delta)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    return math.log2(vals[-1])


def optimal_beamformer(ch: SuChannelPair) -> np.ndarray:
    """Unit-norm maximizer of the secrecy Rayleigh quotient."""
    delta, t = whitened_delta(ch)
    try:
        _, vecs = np.linalg.eigh(delta)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    v = t @ vecs[:, -1]
    return v / np.linalg.norm(v)


def rayleigh_quotient(ch: SuChannelPair, v) -> float:
    v = np.asarray(v, dtype=complex)
    vv = float(np.vdot(v, v).real)
    num = vv + ch.gamma_b * abs(ch.h_b @ v) ** 2
    den = vv + ch.gamma_e * abs(ch.h_e @ v) ** 2
    return num / den


def su_objective(scene: Scene, pa_x=None) -> float:
    """``f(x) = (b + sqrt(b^2 + 4ac)) / a`` at the given PA coordinates."""
    return 2 * _half_root(abc_coefficients(SuChannelPair.from_scene(scene, pa_x)))


def rate_from_objective(f: float) -> float:
    return math.log1p(f / 2) / LN2


def su_gradient(scene: Scene, pa_x, n: int) -> float:
    """Analytic derivative of ``f`` with respect to the x-coordinate of PA ``n``."""
    _check_single_user(scene)
    x = np.asarray(pa_x, dtype=float)
    ch = SuChannelPair.from_scene(scene, x)
    gb, ge = ch.gamma_b, ch.gamma_e
    hb, he = ch.h_b, ch.h_e
    eta = scene.eta
    lam_c, lam_p = scene.carrier_wavelength, scene.guide_wavelength
    pa = np.array([x[n], scene.waveguide_y[n], scene.height])
    feed = scene.feed_points[n]
    feed_dist = np.linalg.norm(pa - feed)
    dfeed = (pa[0] - feed[0]) / feed_dist if feed_dist > 0 else 1.0

    def element_and_slope(user):
        dist = np.linalg.norm(user - pa)
        dx = x[n] - user[0]
        h = freespace_channel(user, pa, lam_c) * np.exp(-2j * np.pi * feed_dist / lam_p)
        dh = h * (-2j * np.pi * (dx / (lam_c * dist) + dfeed / lam_p) - dx / dist**2)
        dnorm = -2 * eta * dx / dist**4
        return h, dh, dnorm

    hbn, dhb, dnb = element_and_slope(scene.bob_positions[0])
    hen, dhe, dne = element_and_slope(scene.eve_positions[0])
    nb = float(np.vdot(hb, hb).real)
    ne = float(np.vdot(he, he).real)
    s = np.dot(hb, he.conj())
    drho = 2 * (np.conj(s) * (dhb * np.conj(hen) + hbn * np.conj(dhe))).real

    abc = abc_coefficients(ch)
    a, b, c = abc.a, abc.b, abc.c
    da = ge * dne
    dc = gb * ge * (dnb * ne + nb * dne - drho)
    db = gb * dnb - ge * dne + dc
    root = math.sqrt(b * b + 4 * a * c)
    if root == 0:
        return float(db / a)
    top = b + root if b >= 0 else 4 * a * c / (root - b) if root - b > 0 else 0.0
    return float((a * db + a * (b * db + 2 * a * dc + 2 * c * da) / root - top * da) / a**2)


def su_gradients(scene: Scene, pa_x) -> np.ndarray:
    return np.array([su_gradient(scene, pa_x, n) for n in range(scene.num_waveguides)])


def optimize_positions(
    scene: Scene,
    beta_ini: float = 10.0,
    beta_min: float = 1e-13,
    max_iters: int = 50,
    *,
    rel_tol: float = 1e-8,
    grad_tol: float = 1e-6,
    x0=None,
) -> SuSolution:
    """Element-wise backtracking gradient ascent on PA positions.

    Each coordinate tries ``x + beta * grad`` with ``beta`` halved from
    ``beta_ini`` down to ``beta_min``; the first trial that stays on the
    waveguide and strictly increases ``f`` is accepted, otherwise the
    coordinate keeps its value. Stops after a sweep whose relative
    improvement is below ``rel_tol`` or whose mean |gradient| is below
    ``grad_tol``.
    """
    _check_single_user(scene)
    if not (beta_ini > 0 and beta_min > 0):
        raise InvalidParameterError("step sizes must be positive")
    half = scene.side_length / 2
    x = np.zeros(scene.num_waveguides) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (scene.num_waveguides,) or np.any(np.abs(x) > half):
        raise InvalidParameterError("initial PA coordinates must lie on the waveguides")

    f = su_objective(scene, x)
    obj_trace = [f]
    grad_trace = [float(np.mean(np.abs(su_gradients(scene, x))))]
    accepted = 0
    it = 0
    for it in range(1, max_iters + 1):
        f_start = f
        for n in range(scene.num_waveguides):
            g = su_gradient(scene, x, n)
            beta = beta_ini
            while beta >= beta_min:
                trial = x[n] + beta * g
                if -half <= trial <= half:
                    x_try = x.copy()
                    x_try[n] = trial
                    f_try = su_objective(scene, x_try)
                    if f_try > f:
                        x, f = x_try, f_try
                        accepted += 1
                        break
                beta /= 2
        obj_trace.append(f)
        grad_trace.append(float(np.mean(np.abs(su_gradients(scene, x)))))
        if f - f_start <= rel_tol * abs(f_start) or grad_trace[-1] < grad_tol:
            break

    ch = SuChannelPair.from_scene(scene, x)
    v = optimal_beamformer(ch)
    return SuSolution(
        v_star=v,
        w_star=math.sqrt(scene.power_budget) * v,
        secrecy_rate=rate_from_objective(f),
        pa_x=x,
        objective_trace=obj_trace,
        grad_norm_trace=grad_trace,
        iterations=it,
        accepted_steps=accepted,
    )
