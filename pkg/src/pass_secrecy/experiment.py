"""Monte-Carlo sweeps over PASS and fixed-antenna schemes.

A config is a TOML file::

    scenario = "multi_user"          # or "single_user"
    trials = 50
    rng_seed = 2025
    baselines = ["mrt", "zf", "fixed_antenna"]

    [sweep]
    variable = "transmit_power_dbm"
    values = [-10, 0, 10]

    [scene]
    num_waveguides = 8
    pas_per_waveguide = 2
    side_length = 60.0
    num_bobs = 4
    num_eves = 2

    [algorithm]
    n_samples = 2000

Every trial draws its layout from an RNG seeded by ``(rng_seed, sweep index,
trial index)``, so all schemes in a trial see the same users and results do
not depend on the worker count.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .baselines import FixedArrayScene, fa_single_user_rate, fixed_array_channels, mrt_beamformers, zf_beamformers
from .errors import InvalidParameterError
from .geometry import SPEED_OF_LIGHT, Scene, random_pa_layout
from .multi_user import FpBcdConfig, fp_bcd, fp_beamforming, wssr
from .single_user import optimize_positions

SCENARIOS = ("single_user", "multi_user")
SWEEP_VARIABLES = (
    "transmit_power_dbm",
    "side_length_m",
    "num_bobs",
    "num_eves",
    "pas_per_waveguide",
    "num_waveguides",
)
BASELINES = ("mrt", "zf", "fixed_antenna")
_INT_SWEEPS = {"num_bobs", "num_eves", "pas_per_waveguide", "num_waveguides"}

CSV_COLUMNS = [
    "sweep_var",
    "sweep_value",
    "trial",
    "scheme",
    "rate_bps_hz",
    "iters",
    "walltime_ms",
    "pa_x",
    "trace",
    "error",
]


def dbm_to_watt(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


@dataclass
class SceneTemplate:
    num_waveguides: int = 4
    pas_per_waveguide: int = 1
    height: float = 3.0
    side_length: float = 30.0
    carrier_frequency: float = 28e9
    n_eff: float = 1.4
    noise_dbm: float = -90.0
    transmit_power_dbm: float = 20.0
    num_bobs: int = 1
    num_eves: int = 1
    weights: list | float = 1.0
    min_spacing: float | None = None  # None: half the carrier wavelength

    def validate(self, allow_empty_bobs=False):
        if self.num_waveguides < 1 or self.pas_per_waveguide < 1:
            raise InvalidParameterError("need at least one waveguide and one PA per waveguide")
        for name in ("height", "side_length", "carrier_frequency", "n_eff"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"scene.{name} must be positive")
        if self.num_bobs < (0 if allow_empty_bobs else 1):
            raise InvalidParameterError("num_bobs must be at least 1")
        if self.num_eves < 0:
            raise InvalidParameterError("num_eves must be non-negative")
        if self.min_spacing is not None and self.min_spacing < 0:
            raise InvalidParameterError("scene.min_spacing must be non-negative")


@dataclass
class AlgorithmParams:
    beta_ini: float = 10.0
    beta_min: float = 1e-13
    su_max_iters: int = 50
    su_rel_tol: float = 1e-8
    n_samples: int = 2000
    max_iters: int = 50
    tol: float = 1e-4
    bisection_tol: float = 1e-6
    split_init_power: bool = False

    def fp_config(self) -> FpBcdConfig:
        return FpBcdConfig(
            n_samples=self.n_samples,
            max_iters=self.max_iters,
            tol=self.tol,
            bisection_tol=self.bisection_tol,
            split_init_power=self.split_init_power,
        )


@dataclass
class ExperimentConfig:
    scenario: str = "single_user"
    sweep_variable: str = "transmit_power_dbm"
    sweep_values: list = field(default_factory=lambda: [20.0])
    trials: int = 1
    rng_seed: int = 0
    scene: SceneTemplate = field(default_factory=SceneTemplate)
    algorithm: AlgorithmParams = field(default_factory=AlgorithmParams)
    baselines: list = field(default_factory=lambda: list(BASELINES))
    validation_mode: bool = False

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise InvalidParameterError(f"scenario must be one of {SCENARIOS}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise InvalidParameterError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if not self.sweep_values:
            raise InvalidParameterError("sweep values must be non-empty")
        if self.trials < 1:
            raise InvalidParameterError("trials must be at least 1")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidParameterError("rng_seed must be an unsigned 64-bit integer")
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise InvalidParameterError(f"unknown baselines {sorted(unknown)}")
        if self.scenario == "single_user" and self.sweep_variable in ("num_bobs", "num_eves", "pas_per_waveguide"):
            raise InvalidParameterError(f"single_user scenario cannot sweep {self.sweep_variable}")
        self.scene.validate(allow_empty_bobs=self.validation_mode)
        for v in self.sweep_values:
            self.scene_for(v).validate(allow_empty_bobs=self.validation_mode)
        return self

    def scene_for(self, value) -> SceneTemplate:
        name = {"side_length_m": "side_length"}.get(self.sweep_variable, self.sweep_variable)
        value = int(value) if self.sweep_variable in _INT_SWEEPS else float(value)
        tpl = dataclasses.replace(self.scene, **{name: value})
        if self.scenario == "single_user":
            tpl = dataclasses.replace(tpl, num_bobs=1, num_eves=1, pas_per_waveguide=1)
        return tpl


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    sweep = raw.pop("sweep", {})
    scene = SceneTemplate(**raw.pop("scene", {}))
    algo = AlgorithmParams(**raw.pop("algorithm", {}))
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise InvalidParameterError(f"unknown config keys {sorted(extra)}")
    cfg = ExperimentConfig(scene=scene, algorithm=algo, **raw)
    if "variable" in sweep:
        cfg.sweep_variable = sweep["variable"]
    if "values" in sweep:
        cfg.sweep_values = list(sweep["values"])
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise InvalidParameterError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(raw)
    except TypeError as exc:
        raise InvalidParameterError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialRecord:
    sweep_var: str
    sweep_value: float
    trial: int
    scheme: str
    rate_bps_hz: float
    iters: int
    walltime_ms: float | None = None
    pa_x: tuple = ()
    trace: tuple = ()
    error: str = ""


def generate_layout(rng, side_length: float, num_bobs: int, num_eves: int, *, validation_mode=False):
    """Bob and Eve positions drawn uniformly over the square at ``z = 0``."""
    if num_bobs < 0 or num_eves < 0:
        raise InvalidParameterError("user counts must be non-negative")
    if num_bobs == 0 and not validation_mode:
        raise InvalidParameterError("at least one Bob is required")
    half = side_length / 2
    bobs = rng.uniform(-half, half, (num_bobs, 2))
    eves = rng.uniform(-half, half, (num_eves, 2))
    return np.column_stack([bobs, np.zeros(num_bobs)]), np.column_stack([eves, np.zeros(num_eves)])


def trial_rng(seed: int, sweep_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sweep_index, trial_index]))


def build_trial_scene(tpl: SceneTemplate, rng, validation_mode=False) -> Scene:
    bobs, eves = generate_layout(rng, tpl.side_length, tpl.num_bobs, tpl.num_eves, validation_mode=validation_mode)
    lam_c = SPEED_OF_LIGHT / tpl.carrier_frequency
    spacing = lam_c / 2 if tpl.min_spacing is None else tpl.min_spacing
    pas = (tpl.pas_per_waveguide,) * tpl.num_waveguides
    pa_x = None
    if tpl.pas_per_waveguide > 1:
        pa_x = random_pa_layout(rng, pas, tpl.side_length, spacing)
    return Scene.build(
        bobs,
        eves,
        num_waveguides=tpl.num_waveguides,
        side_length=tpl.side_length,
        power_budget=dbm_to_watt(tpl.transmit_power_dbm),
        pas_per_waveguide=pas,
        height=tpl.height,
        carrier_frequency=tpl.carrier_frequency,
        n_eff=tpl.n_eff,
        noise_power=dbm_to_watt(tpl.noise_dbm),
        weights=tpl.weights,
        pa_x=pa_x,
        min_spacing=spacing,
    )


def schemes_for(cfg: ExperimentConfig) -> list:
    if cfg.scenario == "single_user":
        return ["pass_alg1"] + (["fa_optimal"] if "fixed_antenna" in cfg.baselines else [])
    out = ["pass_fpbcd"]
    if "fixed_antenna" in cfg.baselines:
        out.append("fa_fpbcd")
    if "mrt" in cfg.baselines:
        out.append("fa_mrt")
    if "zf" in cfg.baselines:
        out.append("fa_zf")
    return out


def _run_scheme(scheme: str, scene: Scene, algo: AlgorithmParams):
    """Returns ``(rate, iterations, pa_x, trace)``."""
    if scheme == "pass_alg1":
        sol = optimize_positions(
            scene, algo.beta_ini, algo.beta_min, algo.su_max_iters, rel_tol=algo.su_rel_tol, x0=scene.pa_x
        )
        return sol.secrecy_rate, sol.iterations, tuple(sol.pa_x), tuple(sol.objective_trace)
    if scheme == "pass_fpbcd":
        res = fp_bcd(scene, algo.fp_config())
        return res.wssr, res.iterations, tuple(res.pa_x), tuple(res.trace)
    fa = FixedArrayScene.from_scene(scene)
    if scheme == "fa_optimal":
        return fa_single_user_rate(fa), 0, (), ()
    ch = fixed_array_channels(fa)
    if scheme == "fa_fpbcd":
        res = fp_beamforming(ch, fa.weights, fa.power_budget, algo.fp_config())
        return res.wssr, res.iterations, (), tuple(res.trace)
    if scheme == "fa_mrt":
        return wssr(ch, mrt_beamformers(ch, fa.power_budget), fa.weights)[0], 0, (), ()
    if scheme == "fa_zf":
        return wssr(ch, zf_beamformers(ch, fa.power_budget), fa.weights)[0], 0, (), ()
    raise InvalidParameterError(f"unknown scheme {scheme}")


def run_trial(cfg: ExperimentConfig, sweep_index: int, trial_index: int, timing: bool = False) -> list:
    value = cfg.sweep_values[sweep_index]
    schemes = schemes_for(cfg)
    common = dict(sweep_var=cfg.sweep_variable, sweep_value=float(value), trial=trial_index)
    try:
        scene = build_trial_scene(cfg.scene_for(value), trial_rng(cfg.rng_seed, sweep_index, trial_index), cfg.validation_mode)
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        tag = f"{type(exc).__name__}: {exc}"
        return [TrialRecord(scheme=s, rate_bps_hz=math.nan, iters=0, error=tag, **common) for s in schemes]

    records = []
    for scheme in schemes:
        t0 = time.perf_counter()
        try:
            rate, iters, pa_x, trace = _run_scheme(scheme, scene, cfg.algorithm)
            err = ""
        except Exception as exc:  # noqa: BLE001
            rate, iters, pa_x, trace, err = math.nan, 0, (), (), f"{type(exc).__name__}: {exc}"
        wall = (time.perf_counter() - t0) * 1e3 if timing else None
        records.append(
            TrialRecord(
                scheme=scheme,
                rate_bps_hz=float(rate),
                iters=int(iters),
                walltime_ms=wall,
                pa_x=tuple(float(v) for v in pa_x),
                trace=tuple(float(v) for v in trace),
                error=err,
                **common,
            )
        )
    return records


def _run_trial_star(args):
    return run_trial(*args)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, timing: bool = False) -> list:
    """All trial records, sorted by sweep index, trial and scheme order."""
    cfg.validate()
    jobs = [(cfg, s, t, timing) for s in range(len(cfg.sweep_values)) for t in range(cfg.trials)]
    if workers <= 1:
        chunks = [_run_trial_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_trial_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    order = {s: i for i, s in enumerate(schemes_for(cfg))}
    index = {float(v): i for i, v in enumerate(cfg.sweep_values)}
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (index[r.sweep_value], r.trial, order[r.scheme]))
    return records


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(records, path) -> Path:
    """Write the per-trial CSV at ``path`` and a JSON summary next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.sweep_var,
                    _fmt(r.sweep_value),
                    r.trial,
                    r.scheme,
                    _fmt(r.rate_bps_hz),
                    r.iters,
                    _fmt(r.walltime_ms),
                    " ".join(repr(x) for x in r.pa_x),
                    " ".join(repr(x) for x in r.trace),
                    r.error,
                ]
            )
    summary_path = path.with_name(path.stem + ".summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summarize(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary_path


def summarize(records) -> dict:
    """Mean and population std of the rate per scheme and sweep value; failed trials are counted, not averaged."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r)
    out: dict = {}
    for (scheme, value), recs in groups.items():
        ok = [r.rate_bps_hz for r in recs if not r.error]
        out.setdefault(scheme, []).append(
            {
                "sweep_value": value,
                "mean": float(np.mean(ok)) if ok else None,
                "std": float(np.std(ok)) if ok else None,
                "trials": len(recs),
                "errors": len(recs) - len(ok),
            }
        )
    for rows in out.values():
        rows.sort(key=lambda d: d["sweep_value"])
    return out


def read_results(path) -> list:
    """Parse a CSV written by :func:`write_results` back into records."""
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                TrialRecord(
                    sweep_var=row["sweep_var"],
                    sweep_value=float(row["sweep_value"]),
                    trial=int(row["trial"]),
                    scheme=row["scheme"],
                    rate_bps_hz=float(row["rate_bps_hz"]),
                    iters=int(row["iters"]),
                    walltime_ms=float(row["walltime_ms"]) if row["walltime_ms"] else None,
                    pa_x=tuple(float(v) for v in row["pa_x"].split()),
                    trace=tuple(float(v) for v in row["trace"].split()),
                    error=row["error"],
                )
            )
    return records


# ---------------------------------------------------------------------------
# presets matching the figure sweeps (desk scale unless ``full``)


def _preset_raw(name: str) -> dict:
    su = {"scenario": "single_user", "baselines": ["fixed_antenna"]}
    mu = {"scenario": "multi_user", "baselines": ["mrt", "zf", "fixed_antenna"]}
    mu_scene = {"num_waveguides": 8, "num_bobs": 4, "num_eves": 2, "side_length": 60.0, "pas_per_waveguide": 2}
    presets = {
        "fig2": dict(su, baselines=[], sweep={"variable": "num_waveguides", "values": [4, 8]},
                     scene={"side_length": 30.0, "transmit_power_dbm": 20.0}),
        "fig3": dict(su, sweep={"variable": "transmit_power_dbm", "values": [0, 5, 10, 15, 20, 25, 30]},
                     scene={"num_waveguides": 4, "side_length": 30.0}),
        "fig4": dict(su, sweep={"variable": "side_length_m", "values": [10, 15, 20, 25, 30, 35, 40]},
                     scene={"num_waveguides": 4, "transmit_power_dbm": 20.0}),
        "fig5": dict(mu, baselines=[], sweep={"variable": "transmit_power_dbm", "values": [-10, 0, 10]},
                     scene=dict(mu_scene, pas_per_waveguide=1)),
        "fig6": dict(mu, sweep={"variable": "transmit_power_dbm", "values": [-20, -15, -10, -5, 0, 5, 10]},
                     scene=mu_scene),
        "fig7": dict(mu, sweep={"variable": "side_length_m", "values": [20, 40, 60, 80, 100]},
                     scene=dict(mu_scene, transmit_power_dbm=-10.0)),
        "fig8a": dict(mu, sweep={"variable": "num_bobs", "values": [2, 3, 4, 5, 6]},
                      scene=dict(mu_scene, transmit_power_dbm=-10.0)),
        "fig8b": dict(mu, sweep={"variable": "num_eves", "values": [1, 2, 3, 4, 5]},
                      scene=dict(mu_scene, transmit_power_dbm=-10.0)),
        "fig9": dict(mu, sweep={"variable": "pas_per_waveguide", "values": [1, 2, 3, 4, 5]},
                     scene=dict(mu_scene, transmit_power_dbm=-10.0)),
    }
    presets["fig8"] = presets["fig8a"]
    if name not in presets:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    return presets[name]


PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig8a", "fig8b", "fig9")


def preset_config(name: str, *, full: bool = False, trials: int | None = None, seed: int = 2025) -> ExperimentConfig:
    raw = json.loads(json.dumps(_preset_raw(name)))
    raw["trials"] = trials if trials is not None else (500 if full else 50)
    raw["rng_seed"] = seed
    raw["algorithm"] = {"n_samples": 10_000 if full else 2000}
    return config_from_dict(raw)
