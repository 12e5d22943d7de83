"""Fixed-antenna (FA) reference array and classical linear beamformers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError
from .geometry import EffectiveChannels, Scene, freespace_channel


def fixed_array_positions(num_antennas: int, carrier_wavelength: float, height: float) -> np.ndarray:
    """Uniform linear array along x with half-wavelength spacing, centred at ``(0, 0, height)``."""
    offsets = (np.arange(num_antennas) - (num_antennas - 1) / 2) * carrier_wavelength / 2
    return np.column_stack([offsets, np.zeros(num_antennas), np.full(num_antennas, height)])


@dataclass(frozen=True, eq=False)
class FixedArrayScene:
    antenna_positions: np.ndarray
    bob_positions: np.ndarray
    eve_positions: np.ndarray
    carrier_wavelength: float
    power_budget: float
    bob_noise: np.ndarray
    eve_noise: np.ndarray
    weights: np.ndarray

    @property
    def num_antennas(self) -> int:
        return len(self.antenna_positions)

    @classmethod
    def from_scene(cls, scene: Scene, num_antennas: int | None = None) -> "FixedArrayScene":
        """Same users, noise and budget as ``scene``; one antenna per waveguide by default."""
        n = scene.num_waveguides if num_antennas is None else num_antennas
        if n < 1:
            raise InvalidParameterError("need at least one antenna")
        return cls(
            antenna_positions=fixed_array_positions(n, scene.carrier_wavelength, scene.height),
            bob_positions=scene.bob_positions,
            eve_positions=scene.eve_positions,
            carrier_wavelength=scene.carrier_wavelength,
            power_budget=scene.power_budget,
            bob_noise=scene.bob_noise,
            eve_noise=scene.eve_noise,
            weights=scene.weights,
        )


def fixed_array_channels(fa: FixedArrayScene, normalize: bool = True) -> EffectiveChannels:
    ant = fa.antenna_positions

    def chans(users, noise):
        if len(users) == 0:
            return np.zeros((len(ant), 0), dtype=complex)
        h = freespace_channel(users[None, :, :], ant[:, None, :], fa.carrier_wavelength)
        return h / np.sqrt(noise)[None, :] if normalize else h

    return EffectiveChannels(chans(fa.bob_positions, fa.bob_noise), chans(fa.eve_positions, fa.eve_noise), normalize)


def mrt_beamformers(ch: EffectiveChannels, power_budget: float, equal_split: bool = True) -> np.ndarray:
    """Matched-filter beamformers; ``equal_split`` gives each user ``P_T / K``."""
    hb = ch.H_b
    norms = np.linalg.norm(hb, axis=0)
    if np.any(norms == 0):
        raise NumericalFailureError("zero Bob channel")
    per_user = power_budget / ch.num_bobs if equal_split else power_budget
    return math.sqrt(per_user) * hb.conj() / norms[None, :]


def zf_beamformers(ch: EffectiveChannels, power_budget: float, rcond: float = 1e-10) -> np.ndarray:
    """Zero-forcing beamformers from the pseudo-inverse of the stacked Bob rows.

    Every column is scaled to ``P_T / K``. Eves are ignored.
    """
    H = ch.H_b.T  # K x N
    k, n = H.shape
    if n < k:
        raise InvalidParameterError(f"zero-forcing needs N >= K (N={n}, K={k})")
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise NumericalFailureError("Bob channel matrix is rank deficient")
    W = np.linalg.pinv(H)
    W = W / np.linalg.norm(W, axis=0)[None, :]
    return math.sqrt(power_budget / k) * W


def fa_single_user_rate(fa: FixedArrayScene) -> float:
    """Optimal single-user secrecy rate of the FA array (closed form)."""
    from .single_user import SuChannelPair, closed_form_secrecy

    ch = fixed_array_channels(fa, normalize=False)
    pair = SuChannelPair(
        ch.H_b[:, 0], ch.H_e[:, 0], fa.power_budget / fa.bob_noise[0], fa.power_budget / fa.eve_noise[0]
    )
    return closed_form_secrecy(pair)[0]
