"""Secrecy beamforming for pinching-antenna systems (PASS).

Single-user closed-form beamforming with gradient-based PA placement,
multiuser FP-BCD optimization, fixed-antenna baselines, and a Monte-Carlo
experiment runner.
"""
from .errors import InfeasibleError, InvalidParameterError, NumericalFailureError, PassError, SingularGeometryError
from .geometry import (
    EffectiveChannels,
    Scene,
    effective_channels,
    freespace_channel,
    placement_feasible,
    random_pa_layout,
    waveguide_phase,
)
from .single_user import (
    SuChannelPair,
    SuSolution,
    closed_form_secrecy,
    eigen_secrecy_rate,
    optimal_beamformer,
    optimize_positions,
    su_gradient,
    su_objective,
)
from .multi_user import FpBcdConfig, FpState, WssrResult, fp_bcd, fp_beamforming, wssr
from .baselines import FixedArrayScene, fixed_array_channels, mrt_beamformers, zf_beamformers

__version__ = "0.1.0"
