"""Discrete-time controlled dynamics ``x_{k+1} = f(x_k, u_k)`` with box bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "SystemModel", "Trace", "ConfigError", "BUILTIN_DYNAMICS",
    "affine", "poly1d", "builtin", "step_dynamics", "simulate", "load_system", "read_text",
]


class ConfigError(ValueError):
    """A configuration document does not match its schema."""


# Vectorized dynamics: (N, n) states, (N, m) or (m,) controls -> (N, n).
DynamicsFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _case1(x, u):
    return 0.2 * x**2 + 0.16 * x + u


def _robot2d(x, u):
    return x + u * np.array([0.9, 0.8])


BUILTIN_DYNAMICS: dict[str, tuple[int, int, DynamicsFn]] = {
    "case1_poly": (1, 1, _case1),
    "robot2d": (2, 2, _robot2d),
}


@dataclass(frozen=True, eq=False)
class SystemModel:
    name: str
    state_bounds: np.ndarray
    control_bounds: np.ndarray
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    _fn: DynamicsFn = field(default=None, repr=False)

    def __post_init__(self):
        for label, b in (("state", self.state_bounds), ("control", self.control_bounds)):
            if b.ndim != 2 or b.shape[1] != 2 or len(b) == 0:
                raise ConfigError(f"{label} bounds must be a non-empty list of [lo, hi] pairs")
            if not np.all(b[:, 0] <= b[:, 1]):
                raise ConfigError(f"{label} bounds have lo > hi")
            b.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.state_bounds)

    @property
    def m(self) -> int:
        return len(self.control_bounds)

    def apply(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Vectorized ``f``: ``x`` has shape ``(N, n)``, ``u`` ``(N, m)`` or ``(m,)``."""
        return self._fn(x, u)

    def in_states(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        ok = (x >= self.state_bounds[:, 0]) & (x <= self.state_bounds[:, 1])
        return ok.all(axis=-1)

    def in_controls(self, u) -> np.ndarray | bool:
        u = np.asarray(u, dtype=float)
        ok = (u >= self.control_bounds[:, 0]) & (u <= self.control_bounds[:, 1])
        return ok.all(axis=-1)


def _bounds(b, label) -> np.ndarray:
    try:
        arr = np.array(b, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} bounds are not numeric: {exc}") from None
    if arr.ndim != 2 or arr.shape[1:] != (2,):
        raise ConfigError(f"{label} bounds must be a list of [lo, hi] pairs")
    return arr


def affine(A, B, state_bounds, control_bounds, name: str = "affine") -> SystemModel:
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    X = _bounds(state_bounds, "state")
    Uc = _bounds(control_bounds, "control")
    n, m = len(X), len(Uc)
    if A.shape != (n, n):
        raise ConfigError(f"A has shape {A.shape}, expected {(n, n)}")
    if B.shape != (n, m):
        raise ConfigError(f"B has shape {B.shape}, expected {(n, m)}")
    A.setflags(write=False)
    B.setflags(write=False)

    def fn(x, u):
        return x @ A.T + np.asarray(u, dtype=float) @ B.T

    return SystemModel(name, X, Uc, "affine", {"A": A, "B": B}, fn)


def poly1d(coeffs, state_bounds, control_bounds, name: str = "poly1d") -> SystemModel:
    c = np.array(coeffs, dtype=float)
    X = _bounds(state_bounds, "state")
    Uc = _bounds(control_bounds, "control")
    if c.ndim != 1 or len(c) == 0:
        raise ConfigError("poly1d coeffs must be a non-empty list")
    if len(X) != 1 or len(Uc) != 1:
        raise ConfigError("poly1d dynamics require dim = control_dim = 1")
    c.setflags(write=False)

    def fn(x, u):
        # Horner, highest degree first
        acc = np.zeros_like(x, dtype=float)
        for cj in c[::-1]:
            acc = acc * x + cj
        return acc + u

    return SystemModel(name, X, Uc, "poly1d", {"coeffs": c}, fn)


def builtin(builtin_name: str, state_bounds, control_bounds, name: str | None = None) -> SystemModel:
    if builtin_name not in BUILTIN_DYNAMICS:
        raise ConfigError(f"unknown builtin dynamics {builtin_name!r}; known: {sorted(BUILTIN_DYNAMICS)}")
    n, m, fn = BUILTIN_DYNAMICS[builtin_name]
    X = _bounds(state_bounds, "state")
    Uc = _bounds(control_bounds, "control")
    if (len(X), len(Uc)) != (n, m):
        raise ConfigError(f"builtin {builtin_name!r} needs dim={n}, control_dim={m}")
    return SystemModel(name or builtin_name, X, Uc, "builtin", {"name": builtin_name}, fn)


def _check_dims(model: SystemModel, x: np.ndarray, u: np.ndarray):
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    if u.shape != (model.m,):
        raise ValueError(f"control has shape {u.shape}, expected ({model.m},)")


def step_dynamics(model: SystemModel, x, u, check_bounds: bool = True) -> np.ndarray:
    """One application of ``f``.  The result is never clamped to the state bounds.

    With ``check_bounds`` the inputs must lie in ``X`` and ``U``; pass
    ``False`` when probing outside them.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _check_dims(model, x, u)
    if check_bounds:
        if not model.in_states(x):
            raise ValueError(f"state {x} outside state bounds")
        if not model.in_controls(u):
            raise ValueError(f"control {u} outside control bounds")
    return model.apply(x[None, :], u[None, :])[0]


@dataclass(frozen=True, eq=False)
class Trace:
    """States ``x_{start}, x_{start+1}, ...`` as an ``(len, n)`` array."""

    start: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("trace points must be a 2-D array")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_values(cls, values, start: int = 0) -> "Trace":
        return cls(start, np.asarray(values, dtype=float).reshape(len(values), -1))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def end(self) -> int:
        """Last covered instant."""
        return self.start + len(self.points) - 1

    def at(self, k: int) -> np.ndarray:
        return self.points[k - self.start]

    def __eq__(self, other):
        return (isinstance(other, Trace) and self.start == other.start
                and np.array_equal(self.points, other.points))


def simulate(model: SystemModel, x_k, controls, start: int = 0) -> Trace:
    """Successors ``x_{k+1} .. x_{k+len}`` of ``x_k``; ``x_k`` itself is excluded."""
    x = np.atleast_1d(np.asarray(x_k, dtype=float))
    U = np.asarray(controls, dtype=float)
    if U.size == 0:
        return Trace(start + 1, np.zeros((0, model.n)))
    U = U.reshape(len(U), -1)
    pts = []
    for u in U:
        x = step_dynamics(model, x, u, check_bounds=False)
        pts.append(x)
    if not np.all(model.in_controls(U)):
        raise ValueError("control sequence leaves the control bounds")
    return Trace(start + 1, np.array(pts))


def load_system(doc) -> SystemModel:
    """Build a model from a config mapping, a JSON path, or a bundled name.

    Bundled names (``"case1.json"``, ``"case2.json"``) are resolved from the
    package data directory when no such file exists on disk.
    """
    if isinstance(doc, (str, Path)):
        doc = json.loads(read_text(doc))
    if not isinstance(doc, Mapping):
        raise ConfigError("system config must be a JSON object")
    try:
        name = doc["name"]
        sb = doc["state_bounds"]
        cb = doc["control_bounds"]
        dyn = doc["dynamics"]
    except KeyError as exc:
        raise ConfigError(f"system config missing field {exc.args[0]!r}") from None
    if not isinstance(name, str):
        raise ConfigError("name must be a string")
    if not isinstance(dyn, Mapping) or "kind" not in dyn:
        raise ConfigError("dynamics must be an object with a 'kind'")
    kind = dyn["kind"]
    try:
        if kind == "affine":
            model = affine(dyn["A"], dyn["B"], sb, cb, name)
        elif kind == "poly1d":
            model = poly1d(dyn["coeffs"], sb, cb, name)
        elif kind == "builtin":
            model = builtin(dyn["name"], sb, cb, name)
        else:
            raise ConfigError(f"unknown dynamics kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"{kind} dynamics missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    for key, want in (("dim", model.n), ("control_dim", model.m)):
        if key in doc and doc[key] != want:
            raise ConfigError(f"{key} = {doc[key]} does not match bounds ({want})")
    return model


def read_text(path) -> str:
    """Contents of ``path``, or of the bundled data file of that name."""
    p = Path(path)
    if p.exists():
        return p.read_text(encoding="utf-8")
    data = resources.files("stlmon") / "data" / p.name
    if p.parent == Path(".") and data.is_file():
        return data.read_text(encoding="utf-8")
    raise FileNotFoundError(path)
