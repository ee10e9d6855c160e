"""Run configuration, manifests and report writers."""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import platform
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "Manifest", "write_json", "write_csv"]


def _float(lo=None, hi=None, lo_open=False):
    def conv(key, raw):
        try:
            x = float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        bad = (lo is not None and (x <= lo if lo_open else x < lo)) or (hi is not None and x > hi)
        if bad or not np.isfinite(x):
            lb = "(" if lo_open else "["
            raise ConfigError(f"{key}={x} outside valid range {lb}{lo}, {hi}]")
        return x
    return conv


def _int(lo, even=False):
    def conv(key, raw):
        try:
            x = int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if x < lo or (even and x % 2):
            raise ConfigError(f"{key}={x} must be {'an even integer ' if even else 'an integer '}>= {lo}")
        return x
    return conv


def _choice(*opts):
    def conv(key, raw):
        if raw not in opts:
            raise ConfigError(f"{key}={raw!r} must be one of {', '.join(opts)}")
        return raw
    return conv


def _eps_list(key, raw):
    try:
        vals = [float(s) for s in str(raw).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None
    if not vals or any(not (0 < v <= 1) for v in vals):
        raise ConfigError(f"{key}: every value must lie in (0, 1]")
    if any(a <= b for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{key}: values must be strictly decreasing")
    return vals


def _str(key, raw):
    return str(raw)


def _bool(key, raw):
    s = str(raw).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


SCHEMA = {
    "equilibrium": {"lambda": (_float(1e-4, 50.0), 1.0), "temp": (_float(0.0, None, True), 1.0)},
    "grid": {"n_per_axis": (_int(4), 9), "v_max": (_float(0.0, None, True), 8.0),
             "n_polar": (_int(2), 16), "n_azimuthal": (_int(4, even=True), 32)},
    "solver": {"epsilon": (_float(0.0, 1.0, True), 1.0), "eps_list": (_eps_list, [0.4, 0.2, 0.1]),
               "formulation": (_choice("absolute", "perturbation"), "perturbation"),
               "dt": (_float(0.0, None, True), 2.0), "t_end": (_float(0.0, None, True), 80.0),
               "integrator": (_choice("rk4", "imex", "etd"), "etd"),
               "spatial": (_choice("none", "torus_1d"), "torus_1d"),
               "n_x": (_int(4, even=True), 64), "wavenumber": (_float(0.0, None, True), 1.0),
               "amplitude": (_float(0.0, None, True), 1e-2), "snapshot_stride": (_int(1), 1),
               "conservative_correction": (_bool, True)},
    "outputs": {"directory": (_str, "bbelab-out"), "formats": (_str, "json,csv")},
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        sec, name = key.split(".")
        return self.values[sec][name]

    def set(self, key, value):
        sec, name = key.split(".")
        conv = SCHEMA[sec][name][0]
        self.values[sec][name] = conv(key, value)

    def as_dict(self) -> dict:
        return json.loads(json.dumps(self.values))


def load_config(path=None, overrides=None) -> RunConfig:
    """Read an INI-style document; unknown sections or keys are errors."""
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} not found")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]; valid sections: {', '.join(SCHEMA)}")
            for key, raw in cp.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {sec}.{key}; valid keys: {', '.join(SCHEMA[sec])}")
                values[sec][key] = SCHEMA[sec][key][0](f"{sec}.{key}", raw)
    cfg = RunConfig(values)
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg.set(key, val)
    return cfg


# ------------------------------------------------------------ manifest

@dataclass
class Manifest:
    command: str
    config: dict
    fingerprints: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        from . import __version__
        return {"command": self.command, "config": self.config, "fingerprints": self.fingerprints,
                "package_version": __version__, "numpy": np.__version__, "python": platform.python_version()}

    @property
    def hash(self) -> str:
        payload = json.dumps({"command": self.command, "config": self.config,
                              "fingerprints": self.fingerprints}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def write(self, directory) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "manifest.json")
        d = self.as_dict()
        d["manifest_hash"] = self.hash
        with open(path, "w") as fh:
            json.dump(d, fh, indent=1, sort_keys=True)
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj, manifest_hash: str | None = None) -> str:
    d = dict(_jsonable(obj))
    if manifest_hash:
        d["manifest_hash"] = manifest_hash
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True, allow_nan=True)
    return path


def write_csv(path, header, rows, manifest_hash: str | None = None) -> str:
    """Comma-separated, header row, floats with 17 significant digits.

    The manifest hash goes into an extra ``manifest_hash`` column so the
    file stays plain CSV.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fmt = lambda x: f"{x:.17g}" if isinstance(x, (float, np.floating)) else str(x)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(header) + (["manifest_hash"] if manifest_hash else []))
        for row in rows:
            wr.writerow([fmt(x) for x in row] + ([manifest_hash] if manifest_hash else []))
    return path
