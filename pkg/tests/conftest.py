import numpy as np
import pytest

from pass_secrecy.geometry import Scene


def make_scene(rng, n=4, k=1, j=1, pas=1, side=30.0, power=0.1, weights=1.0, pa_x=None):
    half = side / 2
    if pa_x is None and pas == 1:
        pa_x = rng.uniform(-half, half, n)
    return Scene.build(
        rng.uniform(-half, half, (k, 2)),
        rng.uniform(-half, half, (j, 2)),
        num_waveguides=n,
        side_length=side,
        power_budget=power,
        pas_per_waveguide=pas,
        weights=weights,
        pa_x=pa_x,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20251015)
