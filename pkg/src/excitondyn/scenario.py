"""Scenario configs, preset catalog, and the run/sweep execution layer.

A scenario is described by a JSON document (version field, schema below);
presets resolve to fully explicit configs so the echoed metadata of any run
is sufficient to reproduce it.  All file writes are atomic
(write-temp-then-rename) and CSV output under the fixed-step integrator
profile is byte-identical across runs.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import jsonschema

from . import bathcorr, heom, specden, zofe
from .model import Temperature, build_hamiltonian, fmo_monomer_hamiltonian, \
    initial_site_state
from .trajectory import write_trajectory_csv, write_trajectory_json
from .units import CM_TO_RAD_PS

__all__ = [
    "ScenarioConfig",
    "ScenarioPreset",
    "ConfigError",
    "CertificateError",
    "CONFIG_SCHEMA",
    "resolve_config",
    "preset_catalog",
    "get_preset",
    "run_scenario",
    "run_sweep",
]

CONFIG_VERSION = 1
SWEEP_CAP = 64

# gamma = 1/(50 fs) expressed in cm^-1; the standard bath timescale of the
# benchmark model.
DRUDE_GAMMA_CM = 20.0 / CM_TO_RAD_PS
FIT_WINDOW_CM = (0.0, 550.0)


class ConfigError(ValueError):
    """Configuration rejected (schema violation or inconsistent fields)."""


class CertificateError(RuntimeError):
    """A numerical certificate (expansion error target) could not be met."""


_SD_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "type": {"const": "drude_lorentz"},
                "lambda_cm": {"type": "number", "exclusiveMinimum": 0},
                "gamma_cm": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "lambda_cm", "gamma_cm"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "lorentzian_sum"},
                "peaks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "strength": {"type": "number", "exclusiveMinimum": 0},
                            "center_cm": {"type": "number", "exclusiveMinimum": 0},
                            "width_cm": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "required": ["strength", "center_cm", "width_cm"],
                        "additionalProperties": False,
                    },
                },
                "enhance": {
                    "type": "object",
                    "properties": {
                        "index": {"type": "integer", "minimum": 0},
                        "factor": {"type": "number", "minimum": 0},
                        "window_cm": {
                            "type": "array", "minItems": 2, "maxItems": 2,
                            "items": {"type": "number"},
                        },
                    },
                    "required": ["index", "factor", "window_cm"],
                    "additionalProperties": False,
                },
            },
            "required": ["type", "peaks"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "composite"},
                "components": {"type": "array", "minItems": 1},
            },
            "required": ["type", "components"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "tabulated"},
                "path": {"type": "string"},
            },
            "required": ["type", "path"],
            "additionalProperties": False,
        },
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "name": {"type": "string"},
        "hamiltonian": {
            "oneOf": [
                {"const": "fmo_monomer"},
                {
                    "type": "object",
                    "properties": {
                        "energies_cm": {"type": "array",
                                        "items": {"type": "number"}},
                        "couplings_upper_cm": {"type": "array",
                                               "items": {"type": "number"}},
                    },
                    "required": ["energies_cm", "couplings_upper_cm"],
                    "additionalProperties": False,
                },
            ],
        },
        "coupling_scale": {"type": "number", "exclusiveMinimum": 0},
        "spectral_density": _SD_SCHEMA,
        "temperature_k": {"type": "number", "minimum": 0},
        "initial_site": {"type": "integer", "minimum": 1},
        "t_end_ps": {"type": "number", "exclusiveMinimum": 0},
        "sample_dt_ps": {"type": "number", "exclusiveMinimum": 0},
        "method": {"enum": ["zofe", "heom", "both"]},
        "integrator": {
            "type": "object",
            "properties": {
                "profile": {"enum": ["adaptive", "fixed_step"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "step_dt_ps": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "expansion": {
            "type": "object",
            "properties": {
                "policy": {"enum": ["auto", "fixed"]},
                "order": {"type": "integer", "minimum": 1},
                "error_target": {"type": "number", "exclusiveMinimum": 0},
                "t_max_ps": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "heom": {
            "type": "object",
            "properties": {
                "depth": {"type": "integer", "minimum": 1},
                "n_exp_terms": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "parameter": {"enum": ["coupling_scale", "expansion_order",
                                       "peak_enhancement_factor"]},
                "values": {"type": "array", "items": {"type": "number"},
                           "maxItems": SWEEP_CAP},
                "metric": {
                    "type": "object",
                    "properties": {
                        "site": {"type": "integer", "minimum": 1},
                        "time_ps": {"type": "number", "minimum": 0},
                    },
                    "required": ["site", "time_ps"],
                    "additionalProperties": False,
                },
            },
            "required": ["parameter", "values", "metric"],
            "additionalProperties": False,
        },
    },
    "required": ["version", "hamiltonian", "spectral_density",
                 "temperature_k", "initial_site", "t_end_ps"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "coupling_scale": 1.0,
    "sample_dt_ps": zofe.DEFAULT_SAMPLE_DT_PS,
    "method": "zofe",
    "integrator": {"profile": "adaptive", "tol": 1e-8, "step_dt_ps": 0.001},
    "expansion": {"policy": "auto",
                  "error_target": bathcorr.DEFAULT_ERROR_TARGET,
                  "t_max_ps": 2.0},
    "heom": {"depth": 4, "n_exp_terms": 1},
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario configuration (every default made explicit)."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def with_updates(self, **updates):
        merged = json.loads(json.dumps(self.data))
        merged.update(updates)
        return resolve_config(merged)


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    description: str
    config: ScenarioConfig


def validate_config(raw):
    """Schema-check a raw config dict; raises ConfigError with a field path."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {exc.json_path}: {exc.message}") \
            from exc


def resolve_config(raw):
    """Validate and fill in every default, returning a ScenarioConfig."""
    validate_config(raw)
    data = json.loads(json.dumps(raw))  # deep copy, JSON-clean
    for key, value in _DEFAULTS.items():
        if isinstance(value, dict):
            merged = dict(value)
            merged.update(data.get(key, {}))
            data[key] = merged
        else:
            data.setdefault(key, value)
    if data["expansion"]["policy"] == "fixed" and "order" not in data["expansion"]:
        raise ConfigError("expansion policy 'fixed' requires an 'order'")
    return ScenarioConfig(data)


# ---------------------------------------------------------------------------
# Config -> model objects.
# ---------------------------------------------------------------------------

def build_sd(spec, base_dir="."):
    """Spectral density object from its config spec."""
    kind = spec["type"]
    if kind == "drude_lorentz":
        return specden.DrudeLorentzSD(spec["lambda_cm"], spec["gamma_cm"])
    if kind == "lorentzian_sum":
        peaks = tuple(
            specden.AntisymLorentzianPeak(p["strength"], p["center_cm"],
                                          p["width_cm"])
            for p in spec["peaks"]
        )
        if "enhance" in spec:
            enh = spec["enhance"]
            peaks = specden.enhance_peak_constrained(
                peaks, enh["index"], enh["factor"], tuple(enh["window_cm"]))
        return specden.LorentzianSumSD(peaks)
    if kind == "composite":
        return specden.CompositeSD(
            tuple(build_sd(c, base_dir) for c in spec["components"]))
    if kind == "tabulated":
        return specden.load_tabulated_sd(os.path.join(base_dir, spec["path"]))
    raise ConfigError(f"unknown spectral density type {kind!r}")


def build_model(config, base_dir="."):
    """(hamiltonian, sd, temperature, rho0) from a resolved config."""
    ham_spec = config["hamiltonian"]
    if ham_spec == "fmo_monomer":
        h = fmo_monomer_hamiltonian()
    else:
        h = build_hamiltonian(ham_spec["energies_cm"],
                              ham_spec["couplings_upper_cm"])
    scale = config["coupling_scale"]
    if scale != 1.0:
        h = h.scaled_couplings(scale)
    sd = build_sd(config["spectral_density"], base_dir)
    temp = Temperature(config["temperature_k"])
    site = config["initial_site"]
    if not 1 <= site <= h.n_sites:
        raise ConfigError(f"initial_site {site} out of range 1..{h.n_sites}")
    return h, sd, temp, initial_site_state(h, site)


_EXPANSION_CACHE = {}


def build_expansion(config, sd, temp):
    """Certified exponential expansion per the config's expansion policy.

    Results are memoized on (spectral density, temperature, policy): the
    certification quadrature is by far the most expensive step of a run and
    presets share bath configurations.
    """
    exp_cfg = config["expansion"]
    try:
        key = (sd, temp.kelvin, exp_cfg["policy"], exp_cfg.get("order"),
               exp_cfg["error_target"], exp_cfg["t_max_ps"])
        cached = _EXPANSION_CACHE.get(key)
    except TypeError:
        key = None
        cached = None
    if cached is not None:
        return cached
    expn = _build_expansion_uncached(exp_cfg, sd, temp)
    if key is not None:
        _EXPANSION_CACHE[key] = expn
    return expn


def _build_expansion_uncached(exp_cfg, sd, temp):
    try:
        if exp_cfg["policy"] == "fixed":
            expn = bathcorr.expand_exponentials(sd, temp, exp_cfg["order"])
            expn = bathcorr.certify_expansion(expn, sd, temp,
                                              t_max_ps=exp_cfg["t_max_ps"])
            if expn.certificate.max_rel_error > exp_cfg["error_target"]:
                raise CertificateError(
                    "fixed-order expansion misses the error target: "
                    f"{expn.certificate.max_rel_error:.2e}"
                )
            return expn
        return bathcorr.auto_expansion(sd, temp,
                                       target=exp_cfg["error_target"],
                                       t_max_ps=exp_cfg["t_max_ps"])
    except RuntimeError as exc:
        raise CertificateError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Preset catalog.
# ---------------------------------------------------------------------------

def _dl_spec(lambda_cm=35.0):
    return {"type": "drude_lorentz", "lambda_cm": lambda_cm,
            "gamma_cm": DRUDE_GAMMA_CM}


def _fig3(name, temperature_k, site, description):
    return ScenarioPreset(name, description, resolve_config({
        "version": CONFIG_VERSION,
        "name": name,
        "hamiltonian": "fmo_monomer",
        "spectral_density": _dl_spec(),
        "temperature_k": temperature_k,
        "initial_site": site,
        "t_end_ps": 1.0,
    }))


def _peak_for_lambda(lambda_cm, center, width):
    strength = lambda_cm * width * (center**2 + width**2) / (np.pi * center)
    return {"strength": strength, "center_cm": center, "width_cm": width}


def _structured_peaks():
    """Four-peak decomposition spanning the electronic transition window,
    with total effective reorganization energy matched to the benchmark
    Drude-Lorentz value over the fit window.

    The low-frequency anchor peak carries most of the weight and is never
    the enhanced one; the three equal satellite peaks are the enhancement
    candidates.  Because the satellites have equal strength, the anchor is
    rescaled identically in every enhanced variant, which keeps the warm
    (thermally dominated) dynamics nearly unchanged while the cold dynamics
    responds to where the enhanced weight sits.
    """
    width = 40.0
    target = specden.effective_reorganization_energy(
        specden.DrudeLorentzSD(35.0, DRUDE_GAMMA_CM), *FIT_WINDOW_CM)
    peaks = [_peak_for_lambda(25.0, 70.0, width)]
    peaks += [_peak_for_lambda(2.0, c, width) for c in (180.0, 300.0, 440.0)]
    sd = specden.LorentzianSumSD(tuple(
        specden.AntisymLorentzianPeak(p["strength"], p["center_cm"],
                                      p["width_cm"]) for p in peaks))
    current = specden.effective_reorganization_energy(sd, *FIT_WINDOW_CM)
    scale = target / current
    return [{**p, "strength": p["strength"] * scale} for p in peaks]


STRUCTURED_ENHANCE_FACTOR = 4.0


def _structured(name, enhance_index, temperature_k, description):
    spec = {"type": "lorentzian_sum", "peaks": _structured_peaks()}
    if enhance_index is not None:
        spec["enhance"] = {"index": enhance_index,
                           "factor": STRUCTURED_ENHANCE_FACTOR,
                           "window_cm": list(FIT_WINDOW_CM)}
    return ScenarioPreset(name, description, resolve_config({
        "version": CONFIG_VERSION,
        "name": name,
        "hamiltonian": "fmo_monomer",
        "spectral_density": spec,
        "temperature_k": temperature_k,
        "initial_site": 1,
        "t_end_ps": 1.0,
    }))


def _high_energy(name, temperature_k):
    return ScenarioPreset(
        name,
        "Drude-Lorentz bath plus a strong extra peak at 1600 cm^-1; the "
        "transfer should be indistinguishable from the plain bath",
        resolve_config({
            "version": CONFIG_VERSION,
            "name": name,
            "hamiltonian": "fmo_monomer",
            "spectral_density": {
                "type": "composite",
                "components": [_dl_spec(),
                               {"type": "lorentzian_sum",
                                "peaks": [_peak_for_lambda(5.0, 1600.0,
                                                           100.0)]}],
            },
            "temperature_k": temperature_k,
            "initial_site": 1,
            "t_end_ps": 1.0,
        }))


def preset_catalog():
    """All built-in scenario presets."""
    presets = [
        _fig3("fig3a", 77.0, 1, "7-site benchmark, 77 K, excitation on site 1"),
        _fig3("fig3b", 77.0, 6, "7-site benchmark, 77 K, excitation on site 6"),
        _fig3("fig3c", 300.0, 1, "7-site benchmark, 300 K, excitation on site 1"),
        _fig3("fig3d", 300.0, 6, "7-site benchmark, 300 K, excitation on site 6"),
        _high_energy("high_energy_peak_77", 77.0),
        _high_energy("high_energy_peak_300", 300.0),
        _structured("structured_sd_b", 1, 77.0,
                    "four-peak bath, 180 peak enhanced, constant lambda_eff"),
        _structured("structured_sd_c", 2, 77.0,
                    "four-peak bath, 300 peak enhanced, constant lambda_eff"),
        _structured("structured_sd_d", 3, 77.0,
                    "four-peak bath, 440 peak enhanced, constant lambda_eff"),
    ]
    coupling = _fig3("coupling_scale_125", 300.0, 1,
                     "electronic couplings scaled by 1.25")
    coupling = ScenarioPreset(
        coupling.name, coupling.description,
        coupling.config.with_updates(
            coupling_scale=1.25,
            sweep={"parameter": "coupling_scale", "values": [1.0, 1.25],
                   "metric": {"site": 3, "time_ps": 1.0}}))
    crosscheck = _fig3("heom_crosscheck", 300.0, 1,
                       "runs both propagators on the fig3c configuration")
    crosscheck = ScenarioPreset(
        crosscheck.name, crosscheck.description,
        crosscheck.config.with_updates(method="both"))
    presets.extend([coupling, crosscheck])
    return presets


def get_preset(name):
    for preset in preset_catalog():
        if preset.name == name:
            return preset
    names = ", ".join(p.name for p in preset_catalog())
    raise ConfigError(f"unknown preset {name!r}; available: {names}")


# ---------------------------------------------------------------------------
# Execution.
# ---------------------------------------------------------------------------

def _atomic_write(path, writer):
    tmp = f"{path}.tmp"
    writer(tmp)
    os.replace(tmp, path)


def _hamiltonian_hash(h):
    payload = np.ascontiguousarray(h.matrix()).tobytes()
    return hashlib.sha256(payload).hexdigest()


def _run_metadata(config, h, sd, expn):
    meta = {
        "config": config.data,
        "hamiltonian_sha256": _hamiltonian_hash(h),
        "lambda_eff_cm": specden.effective_reorganization_energy(
            sd, *FIT_WINDOW_CM),
        "expansion": {
            "n_terms": expn.n_terms,
            "n_pruned": expn.n_pruned,
            "certificate": expn.to_dict()["certificate"],
        },
        "integrator": config["integrator"],
    }
    return meta


def run_scenario(config, out_dir, base_dir="."):
    """Execute one scenario; returns a dict with output paths and summary.

    Writes `<name>.csv` (+ `<name>_heom.csv` for method "heom"/"both") and
    `<name>.json` metadata into `out_dir`.
    """
    os.makedirs(out_dir, exist_ok=True)
    h, sd, temp, rho0 = build_model(config, base_dir)
    name = config.get("name", "scenario")
    integ = config["integrator"]
    outputs = {}
    meta = None
    trajectories = {}

    if config["method"] in ("zofe", "both"):
        expn = build_expansion(config, sd, temp)
        state = zofe.init_propagator(
            h, [expn] * h.n_sites, rho0,
            error_target=config["expansion"]["error_target"])
        step = integ["step_dt_ps"] if integ["profile"] == "fixed_step" else None
        traj = zofe.propagate(state, config["t_end_ps"], tol=integ["tol"],
                              sample_dt=config["sample_dt_ps"], step_dt=step)
        meta = _run_metadata(config, h, sd, expn)
        csv_path = os.path.join(out_dir, f"{name}.csv")
        json_path = os.path.join(out_dir, f"{name}.json")
        _atomic_write(csv_path, lambda p: write_trajectory_csv(traj, p))
        _atomic_write(json_path,
                      lambda p: write_trajectory_json(traj, p, metadata=meta))
        outputs["csv"] = csv_path
        outputs["json"] = json_path
        trajectories["zofe"] = traj

    if config["method"] in ("heom", "both"):
        sd_cfg = config["spectral_density"]
        if sd_cfg["type"] != "drude_lorentz":
            raise ConfigError(
                "the hierarchy reference supports Drude-Lorentz baths only")
        dl = specden.DrudeLorentzSD(sd_cfg["lambda_cm"], sd_cfg["gamma_cm"])
        traj_h = heom.heom_propagate(
            h, dl, temp, config["heom"]["depth"],
            config["heom"]["n_exp_terms"], rho0, config["t_end_ps"],
            tol=integ["tol"], sample_dt=config["sample_dt_ps"])
        heom_csv = os.path.join(out_dir, f"{name}_heom.csv")
        _atomic_write(heom_csv, lambda p: write_trajectory_csv(traj_h, p))
        outputs["heom_csv"] = heom_csv
        trajectories["heom"] = traj_h
        if meta is None:
            meta = {"config": config.data,
                    "hamiltonian_sha256": _hamiltonian_hash(h)}
        meta["heom"] = {"depth": config["heom"]["depth"],
                        "n_exp_terms": config["heom"]["n_exp_terms"]}
        json_path = os.path.join(out_dir, f"{name}.json")
        base = trajectories.get("zofe", traj_h)
        _atomic_write(json_path,
                      lambda p: write_trajectory_json(base, p, metadata=meta))
        outputs["json"] = json_path

    statuses = {k: t.status for k, t in trajectories.items()}
    return {"outputs": outputs, "metadata": meta, "statuses": statuses,
            "trajectories": trajectories}


def _metric_value(traj, metric):
    idx = int(np.argmin(np.abs(traj.times - metric["time_ps"])))
    return float(traj.populations[idx, metric["site"] - 1])


def _point_config(config, parameter, value):
    if parameter == "coupling_scale":
        return config.with_updates(coupling_scale=value)
    if parameter == "expansion_order":
        exp_cfg = dict(config["expansion"])
        exp_cfg["policy"] = "fixed"
        exp_cfg["order"] = int(value)
        return config.with_updates(expansion=exp_cfg)
    if parameter == "peak_enhancement_factor":
        sd_cfg = json.loads(json.dumps(config["spectral_density"]))
        if sd_cfg.get("type") != "lorentzian_sum" or "enhance" not in sd_cfg:
            raise ConfigError(
                "peak_enhancement_factor sweeps need a lorentzian_sum "
                "spectral density with an 'enhance' block")
        sd_cfg["enhance"]["factor"] = value
        return config.with_updates(spectral_density=sd_cfg)
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def run_sweep(config, out_dir, base_dir="."):
    """Run every sweep point and write a summary CSV.

    Each point writes its own outputs under `<out_dir>/<name>_<i>/`; failed
    points are recorded in the summary with an empty metric value.
    """
    sweep = config.get("sweep")
    if sweep is None:
        raise ConfigError("config has no sweep block")
    os.makedirs(out_dir, exist_ok=True)
    name = config.get("name", "scenario")
    metric = sweep["metric"]
    metric_name = f"pop_{metric['site']}_at_{metric['time_ps']}ps"
    rows = []
    results = []
    for i, value in enumerate(sweep["values"]):
        point_dir = os.path.join(out_dir, f"{name}_{i}")
        point = _point_config(config, sweep["parameter"], value)
        point = point.with_updates(name=f"{name}_{i}")
        try:
            result = run_scenario(point, point_dir, base_dir)
            traj = result["trajectories"].get("zofe") \
                or result["trajectories"]["heom"]
            if not traj.ok:
                rows.append((value, metric_name, "nan"))
            else:
                rows.append((value, metric_name,
                             repr(_metric_value(traj, metric))))
            results.append(result)
        except (ConfigError, CertificateError, RuntimeError) as exc:
            rows.append((value, metric_name, "nan"))
            results.append({"error": str(exc)})
    summary_path = os.path.join(out_dir, f"{name}_summary.csv")

    def write_summary(path):
        with open(path, "w") as fh:
            fh.write("sweep_value,metric_name,metric_value\n")
            for value, mname, mval in rows:
                fh.write(f"{value!r},{mname},{mval}\n")

    _atomic_write(summary_path, write_summary)
    return {"summary": summary_path, "rows": rows, "results": results}
