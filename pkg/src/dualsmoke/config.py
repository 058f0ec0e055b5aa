"""Runtime defaults and the key=value config file.

Defaults carry the production constants: dt=0.1, buoyancy alpha=0.025,
finite-difference offset tau=0.1, exponent window |T|=2.5, pre-filter
sigma=1.0, guiding scale c=1.0, 256x256 grid. A config file overrides them
with `key = value` lines (# comments allowed); DUALSMOKE_DATA_DIR sets the
persistence root for the service.
"""

from __future__ import annotations

import os
from pathlib import Path

DATA_DIR_ENV = "DUALSMOKE_DATA_DIR"

DEFAULTS: dict[str, float | int] = {
    "grid_nx": 256,
    "grid_ny": 256,
    "dt": 0.1,
    "alpha": 0.025,
    "tau": 0.1,
    "ftle_T": 2.5,  # magnitude; the pipeline traces backward
    "gaussian_sigma": 1.0,
    "c": 1.0,
}

_INT_KEYS = {"grid_nx", "grid_ny"}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Parse `key = value` lines; unknown keys are rejected."""
    out: dict[str, float | int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from e
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults merged with an optional config file."""
    merged = dict(DEFAULTS)
    if path is not None:
        merged.update(parse_config(Path(path).read_text()))
    return merged


def data_dir(override: str | Path | None = None) -> Path:
    """Persistence root: explicit override, then DUALSMOKE_DATA_DIR, then cwd."""
    if override is not None:
        root = Path(override)
    elif os.environ.get(DATA_DIR_ENV):
        root = Path(os.environ[DATA_DIR_ENV])
    else:
        root = Path.cwd() / "dualsmoke-data"
    root.mkdir(parents=True, exist_ok=True)
    (root / "sketches").mkdir(exist_ok=True)
    (root / "runs").mkdir(exist_ok=True)
    return root
