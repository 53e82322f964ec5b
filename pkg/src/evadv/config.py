"""Run configuration: JSON file with strict unknown-key rejection.

A config file may specify any subset of the default tree below; unknown keys
anywhere in the tree abort the run, so a typo in a hyperparameter never
silently falls back to a default. The fully resolved config is written next
to every run's outputs together with its content hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

METHODS = ("fgsm", "ifgsm", "cw", "ma-adv")

# Ablation switch name -> config key it turns off (Table-style row tags).
ABLATION_FLAGS = {
    "no-diffusion": "diffusion",
    "no-spatial": "spatial",
    "no-temporal": "temporal",
    "no-causal": "causal",
    "no-adaptive-lr": "adaptive_lr",
}

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "runs/default",
    "dataset": {
        "train_per_class": 100,
        "test_per_class": 25,
        "n_events": 256,
        "noise_rate": 0.05,
        "sensor_size": [128, 128],
        "duration_us": 100000.0,
    },
    "victim": {
        "n_points": 256,
        "hidden1": 32,
        "hidden2": 64,
        "head_hidden": 32,
        "epochs": 60,
        "lr": 0.003,
        "batch_size": 32,
        "val_fraction": 0.2,
    },
    "attack": {
        "methods": ["fgsm", "ifgsm", "cw", "ma-adv"],
        "iterations": 100,
        "binary_steps": 20,
        "eta0": 0.01,
        "lambda_lo": 10.0,
        "lambda_hi": 80.0,
        "k_neighbors": 10,
        "sigma_s": 0.01,
        "sigma_t": 0.1,
        "lr_scale_success": 0.8,
        "lr_scale_failure": 1.2,
        "lr_interval": 5,
        "kappa": 0.0,
        "init_sigma": 0.001,
        "epsilon": 1.0,
        "ifgsm_steps": 3,
        "beta1": 0.9,
        "beta2": 0.999,
        "gamma": 1e-8,
        "diffusion": True,
        "spatial": True,
        "temporal": True,
        "causal": True,
        "adaptive_lr": True,
    },
    "defenses": [
        {"kind": "sor", "k": 5, "alpha": 1.1},
        {"kind": "srs", "ratio": 0.5},
    ],
    "report": {"plot_samples": 8},
}

_DEFENSE_KEYS = {"sor": {"kind", "k", "alpha"}, "srs": {"kind", "ratio", "seed"}}


class ConfigError(ValueError):
    """Bad configuration file or CLI usage."""


def _merge(defaults, override, path):
    if isinstance(defaults, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"{path or 'config'}: expected an object")
        unknown = set(override) - set(defaults)
        if unknown:
            raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
        out = {}
        for key, dval in defaults.items():
            if key in override:
                out[key] = _merge(dval, override[key], f"{path}.{key}" if path else key)
            else:
                out[key] = copy.deepcopy(dval)
        return out
    return copy.deepcopy(override)


def _validate(cfg):
    for method in cfg["attack"]["methods"]:
        if method not in METHODS:
            raise ConfigError(f"attack.methods: unknown method {method!r}; expected {METHODS}")
    for i, d in enumerate(cfg["defenses"]):
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError(f"defenses[{i}]: each defense needs a 'kind'")
        allowed = _DEFENSE_KEYS.get(d["kind"])
        if allowed is None:
            raise ConfigError(f"defenses[{i}]: unknown kind {d['kind']!r}")
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"defenses[{i}]: unknown keys {sorted(unknown)}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


def load_config(path=None, seed=None, out_dir=None):
    """Resolve defaults + optional file + CLI overrides into one config dict."""
    override = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            override = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    cfg = _merge(DEFAULT_CONFIG, override, "")
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    return _validate(cfg)


def canonical_dumps(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_dumps(cfg).encode()).hexdigest()


def apply_ablations(attack_cfg: dict, flags) -> tuple[dict, str]:
    """Turn off the switches named by the CLI ablation flags.

    Returns the modified attack config and the row tag, "full" when no flag
    is set.
    """
    out = copy.deepcopy(attack_cfg)
    tags = []
    for flag in flags:
        if flag not in ABLATION_FLAGS:
            raise ConfigError(f"unknown ablation flag {flag!r}")
        out[ABLATION_FLAGS[flag]] = False
        tags.append(flag)
    return out, "+".join(sorted(tags)) if tags else "full"
