"""Binary grids, experiment configs and CSV / JSON reports.

Grid files: magic ``RGL1``, then n, the n dims and h as little-endian
64-bit fields (int64, int64 x n, float64), then the row-major float64
payload.  Configs are flat ``key = value`` files with ``[section]`` headers.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import ShapeSpec, parse_shape
from .errors import ValidationError
from .instances import InstanceConfig
from .solver import OperatorSpec

MAGIC = b"RGL1"


def write_grid(path, values: np.ndarray, h: float) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    header = MAGIC + struct.pack("<q", values.ndim) + struct.pack(f"<{values.ndim}q", *values.shape)
    header += struct.pack("<d", float(h))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes(order="C"))


def read_grid(path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValidationError(f"{path}: not a grid file (bad magic)")
    if len(data) < 12:
        raise ValidationError(f"{path}: truncated header")
    (n,) = struct.unpack_from("<q", data, 4)
    if not 1 <= n <= 8:
        raise ValidationError(f"{path}: implausible dimension {n}")
    if len(data) < 20 + 8 * n:
        raise ValidationError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{n}q", data, 12)
    (h,) = struct.unpack_from("<d", data, 12 + 8 * n)
    offset = 20 + 8 * n
    count = int(np.prod(dims))
    if len(data) != offset + 8 * count:
        raise ValidationError(f"{path}: payload size does not match dims {dims}")
    arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims)
    return arr.astype(float), h


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(str(_fmt(x)) for x in v)
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# configuration ----------------------------------------------------------------

def _floats(text: str, key: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ValidationError(f"{key}: expected a list of numbers, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    shape: ShapeSpec
    n: int = 2
    p: float = 2.0
    form: str = "canonical"
    lambda1: float | None = None
    lambda2: float | None = None
    data: str = "fourier"
    seed: int = 0
    seeds: tuple = (0,)
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    alpha: tuple = (0.0,)
    q: tuple = (1.0,)
    s: tuple = (1.0,)
    eps: tuple = ()
    resolutions: tuple = (32,)
    tol: float = 1e-8
    output: str = "out"

    @property
    def operator(self) -> OperatorSpec:
        return OperatorSpec(self.p, self.form, self.lambda1, self.lambda2)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config: {exc}") from None
    known = {
        "domain": {"shape", "n"},
        "operator": {"p", "form", "lambda1", "lambda2"},
        "data": {"kind", "seed", "seeds", "modes", "amplitude"},
        "grids": {"alpha", "q", "s", "eps", "resolutions"},
        "solver": {"tol"},
        "output": {"dir"},
    }
    for sec in cp.sections():
        if sec not in known:
            raise ValidationError(f"[{sec}]: unknown section")
        for key in cp[sec]:
            if key not in known[sec]:
                raise ValidationError(f"{sec}.{key}: unknown key")

    def get(sec, key, default=None):
        return cp.get(sec, key, fallback=default)

    def num(sec, key, default, kind=float):
        raw = get(sec, key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except ValueError:
            raise ValidationError(f"{sec}.{key}: cannot parse {raw!r}") from None

    shape_text = get("domain", "shape")
    if shape_text is None:
        raise ValidationError("domain.shape: required")
    try:
        shape = parse_shape(shape_text)
    except ValidationError as exc:
        raise ValidationError(f"domain.shape: {exc}") from None
    n = num("domain", "n", 2, int)
    if n not in (2, 3):
        raise ValidationError("domain.n: must be 2 or 3")
    p = num("operator", "p", 2.0)
    if not p > 1 or not math.isfinite(p):
        raise ValidationError(f"operator.p: must be a finite real > 1, got {p}")
    form = get("operator", "form", "canonical")
    if form not in ("canonical", "weighted"):
        raise ValidationError(f"operator.form: unknown form {form!r}")
    lam1 = num("operator", "lambda1", None)
    lam2 = num("operator", "lambda2", None)
    kind = get("data", "kind", "fourier")
    if kind not in ("fourier", "manufactured", "zero", "affine"):
        raise ValidationError(f"data.kind: unknown data kind {kind!r}")
    seed = num("data", "seed", 0, int)
    seeds = tuple(int(s) for s in _floats(get("data", "seeds", str(seed)), "data.seeds"))
    try:
        inst = InstanceConfig(modes=num("data", "modes", 8, int),
                              amplitude=num("data", "amplitude", 1.0))
    except ValidationError as exc:
        raise ValidationError(f"data: {exc}") from None
    grids = {}
    for key, default in (("alpha", "0"), ("q", "1"), ("s", "1"), ("resolutions", "32")):
        vals = _floats(get("grids", key, default), f"grids.{key}")
        if not vals:
            raise ValidationError(f"grids.{key}: must be nonempty")
        grids[key] = vals
    eps = _floats(get("grids", "eps", ""), "grids.eps")
    res = tuple(int(r) for r in grids["resolutions"])
    if any(r < 1 for r in res) or any(b <= a for a, b in zip(res, res[1:])):
        raise ValidationError("grids.resolutions: must be positive and strictly increasing")
    if any(not (0 <= a < n) for a in grids["alpha"]):
        raise ValidationError(f"grids.alpha: values must lie in [0, {n})")
    if any(q <= 0 for q in grids["q"]) or any(s <= 0 for s in grids["s"]):
        raise ValidationError("grids.q / grids.s: values must be positive")
    tol = num("solver", "tol", 1e-8)
    if not tol > 0:
        raise ValidationError("solver.tol: must be positive")
    return ExperimentConfig(shape=shape, n=n, p=p, form=form, lambda1=lam1, lambda2=lam2,
                            data=kind, seed=seed, seeds=seeds, instance=inst,
                            alpha=grids["alpha"], q=grids["q"], s=grids["s"], eps=eps,
                            resolutions=res, tol=tol, output=get("output", "dir", "out"))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
