"""Scene geometry and line-of-sight channels for pinching-antenna systems.

Waveguides run parallel to the x-axis at height ``d``; each carries one or
more pinching antennas (PAs) whose x-coordinates are the placement
variables. Users (Bobs) and eavesdroppers (Eves) sit in the ``z = 0`` plane
inside a ``D x D`` square centred at the origin.

All positions are in metres and all powers in watts.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, SingularGeometryError

SPEED_OF_LIGHT = 299_792_458.0


def waveguide_phase(feed_point, pa_position, guide_wavelength: float):
    """Phase (radians) accumulated between the feed point and a PA.

    Broadcasts over leading dimensions of the two position arrays.
    """
    if not guide_wavelength > 0:
        raise InvalidParameterError(f"guide wavelength must be positive, got {guide_wavelength}")
    dist = np.linalg.norm(np.subtract(feed_point, pa_position, dtype=float), axis=-1)
    return 2 * np.pi * dist / guide_wavelength


def freespace_channel(user_pos, pa_pos, carrier_wavelength: float):
    """Free-space LoS coefficient ``sqrt(eta) exp(-j 2 pi r / lambda_c) / r``.

    ``eta = lambda_c**2 / (16 pi**2)``. Broadcasts like :func:`waveguide_phase`.
    """
    if not carrier_wavelength > 0:
        raise InvalidParameterError(f"carrier wavelength must be positive, got {carrier_wavelength}")
    r = np.linalg.norm(np.subtract(user_pos, pa_pos, dtype=float), axis=-1)
    if np.any(r == 0):
        raise SingularGeometryError("user position coincides with an antenna")
    sqrt_eta = carrier_wavelength / (4 * np.pi)
    return sqrt_eta * np.exp(-2j * np.pi * r / carrier_wavelength) / r


def default_waveguide_y(num_waveguides: int, side_length: float) -> np.ndarray:
    n = np.arange(1, num_waveguides + 1)
    return -side_length / 2 + n * side_length / num_waveguides


@dataclass(frozen=True, eq=False)
class Scene:
    """Complete PASS geometry plus power/noise budget.

    ``pa_x`` is flat with length ``M = sum(pas_per_waveguide)``, grouped by
    waveguide in order. The constructor rejects placements that leave the
    waveguide or violate the minimum same-waveguide spacing.
    """

    pas_per_waveguide: tuple
    height: float
    side_length: float
    waveguide_y: np.ndarray
    feed_points: np.ndarray
    pa_x: np.ndarray
    bob_positions: np.ndarray
    eve_positions: np.ndarray
    carrier_wavelength: float
    guide_wavelength: float
    min_spacing: float
    power_budget: float
    bob_noise: np.ndarray
    eve_noise: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        setf = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        setf("pas_per_waveguide", tuple(int(m) for m in self.pas_per_waveguide))
        setf("waveguide_y", np.asarray(self.waveguide_y, dtype=float).reshape(-1))
        setf("feed_points", np.asarray(self.feed_points, dtype=float).reshape(-1, 3))
        setf("pa_x", np.asarray(self.pa_x, dtype=float).reshape(-1))
        setf("bob_positions", np.asarray(self.bob_positions, dtype=float).reshape(-1, 3))
        setf("eve_positions", np.asarray(self.eve_positions, dtype=float).reshape(-1, 3))
        k, j = len(self.bob_positions), len(self.eve_positions)
        setf("bob_noise", np.broadcast_to(np.asarray(self.bob_noise, dtype=float), (k,)).copy())
        setf("eve_noise", np.broadcast_to(np.asarray(self.eve_noise, dtype=float), (j,)).copy())
        setf("weights", np.broadcast_to(np.asarray(self.weights, dtype=float), (k,)).copy())
        self._validate()

    def _validate(self):
        n = self.num_waveguides
        if n < 1 or any(m < 1 for m in self.pas_per_waveguide):
            raise InvalidParameterError("need at least one waveguide and one PA per waveguide")
        if self.waveguide_y.shape != (n,) or self.feed_points.shape != (n, 3):
            raise InvalidParameterError("waveguide_y / feed_points do not match the waveguide count")
        if self.pa_x.shape != (self.num_pas,):
            raise InvalidParameterError(f"expected {self.num_pas} PA coordinates, got {self.pa_x.size}")
        for name in ("height", "side_length", "carrier_wavelength", "guide_wavelength", "power_budget"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.min_spacing < 0:
            raise InvalidParameterError("min_spacing must be non-negative")
        if self.guide_wavelength > self.carrier_wavelength * (1 + 1e-12):
            raise InvalidParameterError("guide wavelength must not exceed the carrier wavelength (n_eff >= 1)")
        if np.any(self.bob_noise <= 0) or np.any(self.eve_noise <= 0):
            raise InvalidParameterError("noise powers must be positive")
        if np.any(self.weights <= 0):
            raise InvalidParameterError("user weights must be positive")
        users = np.vstack([self.bob_positions, self.eve_positions])
        if users.size and np.any(users[:, 2] != 0):
            raise InvalidParameterError("Bobs and Eves must lie in the z = 0 plane")
        if not np.all(np.isfinite(self.pa_x)):
            raise InvalidParameterError("PA coordinates must be finite")
        if not placement_feasible(self.pa_x, self.pas_per_waveguide, self.side_length, self.min_spacing):
            raise InvalidParameterError("PA placement violates the waveguide range or minimum spacing")

    @property
    def num_waveguides(self) -> int:
        return len(self.pas_per_waveguide)

    @property
    def num_pas(self) -> int:
        return sum(self.pas_per_waveguide)

    @property
    def num_bobs(self) -> int:
        return len(self.bob_positions)

    @property
    def num_eves(self) -> int:
        return len(self.eve_positions)

    @property
    def eta(self) -> float:
        return self.carrier_wavelength**2 / (16 * np.pi**2)

    @property
    def waveguide_index(self) -> np.ndarray:
        """Waveguide index of every entry of ``pa_x``."""
        return np.repeat(np.arange(self.num_waveguides), self.pas_per_waveguide)

    def pa_slice(self, n: int) -> slice:
        start = sum(self.pas_per_waveguide[:n])
        return slice(start, start + self.pas_per_waveguide[n])

    def pa_positions(self, pa_x=None) -> np.ndarray:
        x = self.pa_x if pa_x is None else np.asarray(pa_x, dtype=float)
        idx = self.waveguide_index
        return np.column_stack([x, self.waveguide_y[idx], np.full(x.shape, self.height)])

    def with_pa_x(self, pa_x) -> "Scene":
        return dataclasses.replace(self, pa_x=np.array(pa_x, dtype=float))

    def replace(self, **changes) -> "Scene":
        return dataclasses.replace(self, **changes)

    @classmethod
    def build(
        cls,
        bob_positions,
        eve_positions,
        *,
        num_waveguides: int,
        side_length: float,
        power_budget: float,
        pas_per_waveguide: int | Sequence[int] = 1,
        height: float = 3.0,
        carrier_frequency: float = 28e9,
        n_eff: float = 1.4,
        noise_power: float = 1e-12,
        weights=1.0,
        pa_x=None,
        waveguide_y=None,
        min_spacing: float | None = None,
    ) -> "Scene":
        """Assemble a scene with the usual defaults.

        Feed points sit at the ``-x`` end of each waveguide. Without an explicit
        ``pa_x``, single-PA waveguides start at ``x = 0`` and multi-PA
        waveguides spread their PAs evenly.
        """
        if np.isscalar(pas_per_waveguide):
            pas_per_waveguide = (int(pas_per_waveguide),) * num_waveguides
        lam_c = SPEED_OF_LIGHT / carrier_frequency
        if waveguide_y is None:
            waveguide_y = default_waveguide_y(num_waveguides, side_length)
        waveguide_y = np.asarray(waveguide_y, dtype=float)
        feeds = np.column_stack(
            [np.full(num_waveguides, -side_length / 2), waveguide_y, np.full(num_waveguides, height)]
        )
        if pa_x is None:
            pa_x = np.concatenate(
                [
                    np.zeros(1) if m == 1 else -side_length / 2 + (np.arange(m) + 0.5) * side_length / m
                    for m in pas_per_waveguide
                ]
            )
        bobs = _to_xyz(bob_positions)
        eves = _to_xyz(eve_positions)
        return cls(
            pas_per_waveguide=tuple(pas_per_waveguide),
            height=height,
            side_length=side_length,
            waveguide_y=waveguide_y,
            feed_points=feeds,
            pa_x=pa_x,
            bob_positions=bobs,
            eve_positions=eves,
            carrier_wavelength=lam_c,
            guide_wavelength=lam_c / n_eff,
            min_spacing=lam_c / 2 if min_spacing is None else min_spacing,
            power_budget=power_budget,
            bob_noise=noise_power,
            eve_noise=noise_power,
            weights=weights,
        )


def _to_xyz(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.size == 0:
        return np.zeros((0, 3))
    p = np.atleast_2d(p)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    return p


def placement_feasible(pa_x, pas_per_waveguide, side_length, min_spacing) -> bool:
    """Range and same-waveguide spacing check for a flat PA coordinate vector."""
    x = np.asarray(pa_x, dtype=float)
    half = side_length / 2
    if np.any(x < -half) or np.any(x > half):
        return False
    start = 0
    for m in pas_per_waveguide:
        seg = np.sort(x[start : start + m])
        start += m
        if m > 1 and np.any(np.diff(seg) <= min_spacing):
            return False
    return True


@dataclass(frozen=True, eq=False)
class EffectiveChannels:
    """Effective (pinching-beamformed) channels, one column per user.

    ``H_b`` is ``N x K`` and ``H_e`` is ``N x J``. When ``normalized`` is set,
    each column has been divided by the square root of its noise power.
    """

    H_b: np.ndarray
    H_e: np.ndarray
    normalized: bool = True

    @property
    def num_antennas(self) -> int:
        return self.H_b.shape[0]

    @property
    def num_bobs(self) -> int:
        return self.H_b.shape[1]

    @property
    def num_eves(self) -> int:
        return self.H_e.shape[1]


def pa_phasors(scene: Scene, users: np.ndarray, x, n: int) -> np.ndarray:
    """Per-PA contributions of hypothetical PAs at ``x`` on waveguide ``n``.

    Returns a ``(len(users), len(x))`` complex array whose entries are the
    free-space coefficient times the in-waveguide phase factor, scaled by
    ``1/sqrt(M_n)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pos = np.column_stack([x, np.full(x.shape, scene.waveguide_y[n]), np.full(x.shape, scene.height)])
    h = freespace_channel(users[:, None, :], pos[None, :, :], scene.carrier_wavelength)
    phase = waveguide_phase(scene.feed_points[n], pos, scene.guide_wavelength)
    return h * np.exp(-1j * phase)[None, :] / np.sqrt(scene.pas_per_waveguide[n])


def _user_channels(scene: Scene, users: np.ndarray, pa_x) -> np.ndarray:
    if len(users) == 0:
        return np.zeros((scene.num_waveguides, 0), dtype=complex)
    pos = scene.pa_positions(pa_x)
    idx = scene.waveguide_index
    h = freespace_channel(users[:, None, :], pos[None, :, :], scene.carrier_wavelength)
    phase = waveguide_phase(scene.feed_points[idx], pos, scene.guide_wavelength)
    scale = 1 / np.sqrt(np.asarray(scene.pas_per_waveguide, dtype=float))[idx]
    contrib = h * (np.exp(-1j * phase) * scale)[None, :]
    membership = np.zeros((scene.num_pas, scene.num_waveguides))
    membership[np.arange(scene.num_pas), idx] = 1.0
    return (contrib @ membership).T


def effective_channels(scene: Scene, pa_x=None, *, normalize: bool = True) -> EffectiveChannels:
    """Effective Bob/Eve channels for the scene's (or the given) PA placement.

    ``pa_x`` bypasses the scene's own coordinates without re-validating them,
    which the optimizers rely on while sweeping candidate positions.
    """
    hb = _user_channels(scene, scene.bob_positions, pa_x)
    he = _user_channels(scene, scene.eve_positions, pa_x)
    if normalize:
        hb = hb / np.sqrt(scene.bob_noise)[None, :]
        he = he / np.sqrt(scene.eve_noise)[None, :]
    return EffectiveChannels(hb, he, normalize)


def random_pa_layout(rng, pas_per_waveguide, side_length: float, min_spacing: float, max_tries: int = 1000):
    """Uniform random PA coordinates, redrawn per waveguide until the spacing holds."""
    out = []
    half = side_length / 2
    for m in pas_per_waveguide:
        for _ in range(max_tries):
            x = rng.uniform(-half, half, m)
            if m == 1 or np.all(np.diff(np.sort(x)) > min_spacing):
                out.append(x)
                break
        else:
            raise InvalidParameterError(f"could not place {m} PAs with spacing {min_spacing} on length {side_length}")
    return np.concatenate(out) if out else np.zeros(0)
