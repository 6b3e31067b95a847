"""Experiment configuration files.

Grammar: one `key = value` pair per line with dotted key paths; `[section]`
headers prefix the keys that follow; `#` starts a comment.  Values are typed
scalars (int, float, bool, string) or comma-separated lists of scalars.
Example::

    design = gmm
    n = 1000
    seed = 7
    fit.n_iter = 2000

    [noise.0]
    family = gaussian
    scale = 1.258

Parsing produces a flat dict from dotted paths to typed values;
serialize_config writes fully dotted keys, so parse/serialize round-trips.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .noise import CoordinateNoise, Fixed, HierarchicalUniform, NoiseModel
from .optim import FitConfig

# heteroscedastic draws are divided by these so the conditional noise
# variance equals the squared uniform draw for every family
FAMILY_DIVISORS = {"laplace": math.sqrt(2.0), "student_t": math.sqrt(3.0)}


def _parse_scalar(text: str):
    text = text.strip()
    if text.lower() == "true":
        return True
    if text.lower() == "false":
        return False
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(text: str) -> dict:
    """Parse config text into a flat {dotted key: typed value} dict."""
    cfg = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"line {lineno}: empty section header")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        full = f"{section}.{key}" if section else key
        if full in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {full!r}")
        if "," in value:
            cfg[full] = tuple(_parse_scalar(v) for v in value.split(","))
        else:
            cfg[full] = _parse_scalar(value)
    return cfg


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        # quote strings that would re-parse as another type
        if v != str(_parse_scalar(v)) or not isinstance(_parse_scalar(v), str):
            return f'"{v}"'
        return v
    return str(v)


def serialize_config(cfg: dict) -> str:
    """Write a flat config dict back to text with fully dotted keys."""
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, (tuple, list)):
            lines.append(f"{key} = {', '.join(_format_scalar(x) for x in v)}")
        else:
            lines.append(f"{key} = {_format_scalar(v)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")


def _sub(cfg: dict, prefix: str) -> dict:
    p = prefix + "."
    return {k[len(p):]: v for k, v in cfg.items() if k.startswith(p)}


def noise_from_config(cfg: dict, per_observation_scales: dict = None) -> NoiseModel:
    """Build a NoiseModel from `noise.<coord>.*` keys.

    Coordinates must be 0..d-1 with no gaps.  A coordinate with
    `scale = per_observation` takes its per-row scales from
    per_observation_scales[coord] (supplied by the dataset loader).
    """
    from .noise import PerObservation

    coords = {}
    for key in cfg:
        parts = key.split(".")
        if parts[0] == "noise" and len(parts) == 3:
            try:
                coords.setdefault(int(parts[1]), {})[parts[2]] = cfg[key]
            except ValueError:
                raise ConfigError(f"noise coordinate must be an integer in {key!r}")
    if not coords:
        raise ConfigError("no noise.<coord> sections found")
    if sorted(coords) != list(range(len(coords))):
        raise ConfigError(f"noise coordinates must be 0..d-1, got {sorted(coords)}")

    built = []
    for i in range(len(coords)):
        spec = coords[i]
        family = spec.get("family")
        if family is None:
            raise ConfigError(f"noise.{i} is missing 'family'")
        if family == "none":
            built.append(CoordinateNoise("none"))
            continue
        if family == "centered_poisson":
            try:
                built.append(CoordinateNoise(
                    "centered_poisson",
                    rate=float(spec["rate"]),
                    multiplier=float(spec["multiplier"]),
                ))
            except KeyError as exc:
                raise ConfigError(f"noise.{i}: centered_poisson needs {exc}")
            continue
        if spec.get("scale") == "per_observation":
            scales = (per_observation_scales or {}).get(i)
            if scales is None:
                raise ConfigError(
                    f"noise.{i} requests per-observation scales but the dataset "
                    f"has no scale_{i} column"
                )
            law = PerObservation(scales)
        elif "scale" in spec:
            law = Fixed(float(spec["scale"]))
        elif "lo" in spec and "hi" in spec:
            divisor = float(spec.get("divisor", FAMILY_DIVISORS.get(family, 1.0)))
            law = HierarchicalUniform(float(spec["lo"]), float(spec["hi"]), divisor)
        else:
            raise ConfigError(
                f"noise.{i}: need 'scale' or 'lo'/'hi' for family {family!r}"
            )
        built.append(CoordinateNoise(family, law))
    return NoiseModel(tuple(built))


def fit_config_from_config(cfg: dict) -> FitConfig:
    """Build a FitConfig from `fit.*` keys, defaulting missing fields."""
    fields = _sub(cfg, "fit")
    kwargs = {}
    valid = {"n_iter", "learning_rate", "lr_schedule", "decay_t0", "batch_m",
             "seed", "optimizer", "record_every", "clip_norm", "data_term",
             "average_tail"}
    for key, value in fields.items():
        if key not in valid:
            raise ConfigError(f"unknown fit option fit.{key}")
        kwargs[key] = value
    try:
        return FitConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid fit configuration: {exc}")


def spec_from_config(cfg: dict):
    """Build an ExperimentSpec from a parsed experiment config."""
    from .simlab import DESIGNS, ExperimentSpec

    design = cfg.get("design")
    if design is None:
        raise ConfigError("config is missing 'design'")
    if design not in DESIGNS:
        raise ConfigError(
            f"unknown design {design!r}; valid designs: {', '.join(DESIGNS)}"
        )
    truth = _sub(cfg, "truth") or None
    kwargs = {}
    for key in ("n", "replications", "n_components", "sandwich_b"):
        if key in cfg:
            kwargs[key] = int(cfg[key])
    try:
        return ExperimentSpec(
            design=design,
            noise=noise_from_config(cfg),
            fit_config=fit_config_from_config(cfg),
            base_seed=int(cfg.get("seed", 0)),
            truth=truth,
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid experiment configuration: {exc}")


def load_dataset_csv(path):
    """Read a dataset CSV: header row, numeric columns.

    Columns named `scale_<i>` supply per-row noise scales for coordinate i
    and are returned separately.  Returns (data matrix, {coord: scales}).
    """
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if not header:
                raise ConfigError(f"empty dataset {path}")
            names = [c.strip() for c in header.split(",")]
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}")
    except ValueError as exc:
        raise ConfigError(f"dataset {path} is not numeric CSV: {exc}")
    if body.size == 0:
        raise ConfigError(f"empty dataset {path}")
    if body.shape[1] != len(names):
        raise ConfigError(
            f"dataset {path}: header names {len(names)} columns, rows have "
            f"{body.shape[1]}"
        )
    coord_idx = [j for j, name in enumerate(names) if not name.startswith("scale_")]
    scales = {}
    for j, name in enumerate(names):
        if name.startswith("scale_"):
            try:
                coord = int(name[len("scale_"):])
            except ValueError:
                raise ConfigError(
                    f"dataset {path}: scale column {name!r} must be scale_<coord index>"
                )
            scales[coord] = body[:, j]
    return body[:, coord_idx], scales
