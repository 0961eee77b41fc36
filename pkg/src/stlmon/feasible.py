"""Backward computation of feasible and exclusive feasible sets, and their artifact file.

For instant ``k`` in segment ``[a, b]``::

    Xhat_k = Y^(b+1-k)(X_{b+1})                        unrestricted one-step iterate
    G  : X_k = Y_H(X_{k+1})
    F  : X_k = (H & Xhat_k) | Y(X_{k+1})        ; k = b: H & Xhat_k
    U' : X_k = (H1 & H2 & Xhat_k) | Y_H1(X_{k+1}) ; k = b: H1 & H2 & Xhat_k

``X_{T+1}`` is the whole space with no successor constraint, so the last
instant's sets only depend on the last segment's region.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gridset import GeometryMismatch, GridGeometry, GridSet, Mode, rasterize
from .reach import ControlGrid, ReachConfig, Scheme, one_step_set
from .stl import Op, SegmentedFormula, formula_digest
from .system import SystemModel

__all__ = [
    "FeasibleSets", "ArtifactError", "CorruptArtifact", "ArtifactVersionError",
    "compute_feasible_sets", "save_artifact", "load_artifact", "dumps_artifact", "loads_artifact",
    "rle_encode", "rle_decode",
]

log = logging.getLogger(__name__)

ARTIFACT_VERSION = 1


@dataclass(eq=False)
class FeasibleSets:
    geometry: GridGeometry
    X: list[GridSet]
    Xhat: list[GridSet]
    formula_sha256: str
    system: str
    reach: ReachConfig
    mode: Mode = Mode.INNER
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.X) != len(self.Xhat) or not self.X:
            raise ValueError("X and Xhat must be non-empty and of equal length")
        for s in (*self.X, *self.Xhat):
            if s.geometry != self.geometry:
                raise GeometryMismatch("feasible sets must share one grid")

    @property
    def horizon(self) -> int:
        return len(self.X) - 1

    def __eq__(self, other):
        return (isinstance(other, FeasibleSets)
                and self.geometry == other.geometry
                and self.X == other.X and self.Xhat == other.Xhat
                and self.formula_sha256 == other.formula_sha256
                and self.system == other.system
                and self.reach == other.reach and self.mode == other.mode)


def compute_feasible_sets(sf: SegmentedFormula, model: SystemModel, g: GridGeometry,
                          cfg: ReachConfig, mode: Mode | str = Mode.INNER) -> FeasibleSets:
    """Sets ``X_k`` and ``Xhat_k`` for every ``k`` in ``[0, T]``, computed backwards."""
    mode = Mode(mode)
    if g.ndim != model.n:
        raise GeometryMismatch(f"{g.ndim}-D grid for a {model.n}-D system")
    T = sf.horizon
    full = g.full()
    raster_cache: dict = {}

    def raster(p):
        if p not in raster_cache:
            raster_cache[p] = rasterize(p, g, mode)
        return raster_cache[p]

    def step(target, h):
        # None stands for the unconstrained X_{T+1}.
        return h if target is None else one_step_set(target, h, model, cfg)

    X: list = [None] * (T + 2)
    Xhat: list = [None] * (T + 1)
    for k in range(T, -1, -1):
        seg = sf.segment_at(k)
        b = seg.b
        Xhat[k] = step(X[b + 1] if k == b else Xhat[k + 1], full)
        if seg.op is Op.ALWAYS:
            X[k] = step(X[k + 1], raster(seg.regions[0]))
        elif seg.op is Op.EVENTUALLY:
            hit = raster(seg.regions[0]) & Xhat[k]
            X[k] = hit if k == b else hit | step(X[k + 1], full)
        elif seg.op is Op.UNTIL_PRIME:
            h1, h2 = seg.regions
            hit = raster(h1) & raster(h2) & Xhat[k]
            X[k] = hit if k == b else hit | step(X[k + 1], raster(h1))
        else:
            raise ValueError(f"unsupported segment operator {seg.op}")
        log.debug("k=%d op=%s |X|=%d |Xhat|=%d", k, seg.op.value, X[k].count(), Xhat[k].count())
    return FeasibleSets(
        geometry=g, X=X[: T + 1], Xhat=Xhat,
        formula_sha256=formula_digest(sf.source), system=model.name,
        reach=cfg, mode=mode,
    )


# --------------------------------------------------------------------------
# Artifact I/O


class ArtifactError(ValueError):
    pass


class CorruptArtifact(ArtifactError):
    pass


class ArtifactVersionError(ArtifactError):
    pass


def rle_encode(flat: np.ndarray) -> list[int]:
    """Alternating run lengths, starting with the (possibly empty) run of false cells."""
    flat = np.asarray(flat, dtype=bool)
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [len(flat)]])
    runs = np.diff(bounds).tolist()
    if len(flat) and flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs, size: int) -> np.ndarray:
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs) or sum(runs) != size:
        raise GeometryMismatch(f"run lengths sum to {sum(runs)}, grid has {size} cells")
    vals = np.arange(len(runs)) % 2 == 1
    return np.repeat(vals, runs)


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _body(fs: FeasibleSets) -> dict:
    return {
        "version": ARTIFACT_VERSION,
        "formula_sha256": fs.formula_sha256,
        "system": fs.system,
        "grid": {"bounds": [list(b) for b in fs.geometry.bounds], "cells": list(fs.geometry.cells)},
        "reach": {
            "control_samples": list(fs.reach.controls.counts),
            "scheme": fs.reach.scheme.value,
            "epsilon": float(fs.reach.epsilon),
            "mode": fs.mode.value,
        },
        "horizon": fs.horizon,
        "sets": [
            {"k": k, "X": rle_encode(x.flat), "Xhat": rle_encode(xh.flat)}
            for k, (x, xh) in enumerate(zip(fs.X, fs.Xhat))
        ],
    }


def dumps_artifact(fs: FeasibleSets) -> str:
    body = _body(fs)
    body["checksum"] = hashlib.sha256(_canonical(body).encode()).hexdigest()
    return _canonical(body) + "\n"


def loads_artifact(text: str) -> FeasibleSets:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptArtifact(f"artifact is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "checksum" not in doc:
        raise CorruptArtifact("artifact has no checksum")
    checksum = doc.pop("checksum")
    if hashlib.sha256(_canonical(doc).encode()).hexdigest() != checksum:
        raise CorruptArtifact("artifact checksum mismatch")
    if doc.get("version") != ARTIFACT_VERSION:
        raise ArtifactVersionError(f"artifact version {doc.get('version')!r}, expected {ARTIFACT_VERSION}")
    try:
        g = GridGeometry(doc["grid"]["bounds"], doc["grid"]["cells"])
        r = doc["reach"]
        cfg = ReachConfig(ControlGrid(r["control_samples"]), Scheme(r["scheme"]), float(r["epsilon"]))
        mode = Mode(r["mode"])
        T = int(doc["horizon"])
        sets = doc["sets"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed artifact: {exc}") from None
    if [s.get("k") for s in sets] != list(range(T + 1)):
        raise ArtifactError("artifact sets are not indexed 0..horizon")
    X = [GridSet(g, rle_decode(s["X"], g.size)) for s in sets]
    Xhat = [GridSet(g, rle_decode(s["Xhat"], g.size)) for s in sets]
    return FeasibleSets(g, X, Xhat, doc["formula_sha256"], doc["system"], cfg, mode)


def save_artifact(fs: FeasibleSets, destination) -> None:
    Path(destination).write_text(dumps_artifact(fs), encoding="utf-8")


def load_artifact(source) -> FeasibleSets:
    return loads_artifact(Path(source).read_text(encoding="utf-8"))
