"""File formats: MPS JSON, circuit checkpoint JSON, and CSV tables.

Floats are written with 17 significant digits ('.'-separated, locale
independent) so that a write/read round trip is bit-exact. Complex arrays are
stored row-major as lists of ``[re, im]`` pairs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .circuit import LAYOUT, StairCircuit
from .errors import ArgumentError
from .mps import MatrixProductState

CHECKPOINT_VERSION = 1
UNITARY_TOLERANCE = 1e-10


def fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ArgumentError(f"refusing to serialize non-finite value {x}")
    return format(x, ".17g")


def _encode(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float at 17 significant digits."""
    return _encode(obj) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _pairs(arr: np.ndarray) -> list:
    flat = np.asarray(arr, dtype=np.complex128).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _unpairs(pairs, shape) -> np.ndarray:
    data = np.asarray(pairs, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ArgumentError("complex data must be a list of [re, im] pairs")
    out = data[:, 0] + 1j * data[:, 1]
    if out.size != int(np.prod(shape)):
        raise ArgumentError(f"{out.size} entries do not fill shape {list(shape)}")
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# MPS


def mps_to_dict(psi: MatrixProductState) -> dict:
    return {
        "n_sites": psi.n_sites,
        "tensors": [{"shape": list(t.shape), "data": _pairs(t)} for t in psi.tensors],
    }


def mps_from_dict(doc: dict) -> MatrixProductState:
    try:
        n_sites = int(doc["n_sites"])
        entries = doc["tensors"]
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"malformed MPS document: missing {exc}") from exc
    if len(entries) != n_sites:
        raise ArgumentError(f"n_sites={n_sites} but {len(entries)} tensors")
    tensors = [_unpairs(e["data"], tuple(e["shape"])) for e in entries]
    return MatrixProductState(tuple(tensors))


def save_mps(path, psi: MatrixProductState) -> None:
    write_json(path, mps_to_dict(psi))


def load_mps(path) -> MatrixProductState:
    return mps_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Circuit checkpoints


def circuit_to_dict(c: StairCircuit) -> dict:
    layers = []
    for lat, uni in zip(c.latents, c.unitaries):
        layers.append(
            [{"site": site, "latent": _pairs(lat[site]), "unitary": _pairs(uni[site])} for site in range(c.n_sites - 1)]
        )
    return {
        "version": CHECKPOINT_VERSION,
        "n_sites": c.n_sites,
        "layout": LAYOUT,
        "layers": layers,
        "seed_history": [list(h) for h in c.seed_history],
    }


def circuit_from_dict(doc: dict) -> StairCircuit:
    version = doc.get("version", CHECKPOINT_VERSION)
    if version != CHECKPOINT_VERSION:
        raise ArgumentError(f"checkpoint version {version} not supported (expected {CHECKPOINT_VERSION})")
    if doc.get("layout") != LAYOUT:
        raise ArgumentError(f"unsupported layout {doc.get('layout')!r}")
    n_sites = int(doc["n_sites"])
    latents, unitaries = [], []
    for layer, gates in enumerate(doc["layers"]):
        if [g["site"] for g in gates] != list(range(n_sites - 1)):
            raise ArgumentError(f"layer {layer}: gates must cover sites 0..{n_sites - 2} in ascending order")
        latents.append(np.stack([_unpairs(g["latent"], (4, 4)) for g in gates]))
        unitaries.append(np.stack([_unpairs(g["unitary"], (4, 4)) for g in gates]))
    history = tuple(tuple(h) for h in doc.get("seed_history", []))
    c = StairCircuit.from_latents(n_sites, latents, history)
    for layer, (stored, projected) in enumerate(zip(unitaries, c.unitaries)):
        dev = float(np.max(np.abs(stored - projected)))
        if dev > UNITARY_TOLERANCE:
            raise ArgumentError(f"layer {layer}: stored unitaries deviate from projection by {dev:.3e}")
    return c


def save_checkpoint(path, c: StairCircuit) -> None:
    write_json(path, circuit_to_dict(c))


def load_checkpoint(path) -> StairCircuit:
    return circuit_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


class CsvAppender:
    """Row-at-a-time CSV writer that flushes after every row."""

    def __init__(self, path, header):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(header)
        self._fh.flush()

    def write(self, row) -> None:
        self._writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
