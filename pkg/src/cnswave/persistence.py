"""Run configuration (INI), the binary checkpoint container, surface CSVs
and key = value manifests."""

from __future__ import annotations

import configparser
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .equilibrium import Constant, PhysicalParams, Polytropic
from .operators import Forcing, GaussianBump, Model, PressureStress, State, VectorBump
from .spaces import Grid

__all__ = [
    "ConfigError",
    "CheckpointError",
    "RunConfig",
    "load_config",
    "parse_config",
    "profile_hash",
    "save_checkpoint",
    "load_checkpoint",
    "write_surface_csv",
    "write_comparison_csv",
    "write_manifest",
    "read_manifest",
    "config_from_descriptor",
]

MAGIC = b"CNSWCKPT"
VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(IOError):
    pass


# ------------------------------------------------------------------ config
@dataclass
class RunConfig:
    params: PhysicalParams
    L: float = 16.0
    nx: int = 64
    nz: int = 24
    smoothing_unit: float | None = None  # default 2 / L
    forcing_kind: str = "pressure"
    center: float | None = None  # default L / 2
    width: float = 1.0
    amplitude: float = 1e-3
    y0: float | None = None  # default b
    direction: tuple = (0.0, 1.0)
    gammas: list = field(default_factory=lambda: [1.0])
    method: str = "newton"
    monitor_index: float = 0.0
    residual_tol: float = 1e-9
    max_steps: int = 20
    gauge: str = "whole-line"
    reg_m: int = 2
    reg_N: float = 100.0
    reg_tau: float = 1.0
    out: str = "run"

    @property
    def forcing_center(self) -> float:
        return 0.5 * self.L if self.center is None else self.center

    def grid(self) -> Grid:
        unit = 2.0 / self.L if self.smoothing_unit is None else self.smoothing_unit
        return Grid(self.L, self.nx, self.nz, b=self.params.b, n=self.params.n, smoothing_unit=unit)

    def model(self) -> Model:
        return Model(self.grid(), self.params)

    def forcing(self, gamma: float) -> Forcing:
        b = self.params.b
        bump = GaussianBump(
            self.amplitude, self.forcing_center, self.width, self.L, b if self.y0 is None else self.y0
        )
        kind = self.forcing_kind
        if kind == "none" or self.amplitude == 0:
            return Forcing(gamma)
        if kind == "pressure":
            return Forcing(gamma, stress=PressureStress(bump))
        if kind == "bulk":
            return Forcing(gamma, F=VectorBump(bump, self.direction))
        if kind == "specific":
            return Forcing(gamma, G=VectorBump(bump, self.direction))
        raise ConfigError(f"unknown forcing kind {kind!r}")

    def descriptor(self) -> dict:
        """Flat dictionary of every setting (manifest and checkpoint header)."""
        p = self.params
        law = p.pressure
        return {
            "physics.n": p.n,
            "physics.b": p.b,
            "physics.gravity": p.gravity,
            "physics.surface_tension": p.surface_tension,
            "physics.p_ext": p.p_ext,
            "physics.K": getattr(law, "K", float("nan")),
            "physics.alpha": getattr(law, "alpha", float("nan")),
            "physics.mu": float(p.mu(1.0)),
            "physics.lambda": float(p.lam(1.0)),
            "grid.L": self.L,
            "grid.nx": self.nx,
            "grid.nz": self.nz,
            "grid.smoothing_unit": self.grid().smoothing_unit,
            "forcing.kind": self.forcing_kind,
            "forcing.center": self.forcing_center,
            "forcing.width": self.width,
            "forcing.amplitude": self.amplitude,
            "forcing.y0": self.params.b if self.y0 is None else self.y0,
            "forcing.direction": ", ".join(repr(float(d)) for d in self.direction),
            "forcing.gamma": ", ".join(repr(float(g)) for g in self.gammas),
            "solver.method": self.method,
            "solver.monitor_index": self.monitor_index,
            "solver.residual_tol": self.residual_tol,
            "solver.max_steps": self.max_steps,
            "solver.gauge": self.gauge,
        }


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    get = lambda sec, key, fb: cp.get(sec, key, fallback=fb)
    try:
        phys = cp["physics"] if cp.has_section("physics") else {}
        law = phys.get("pressure", "polytropic")
        if law != "polytropic":
            raise ConfigError("only the polytropic pressure law is configurable from files")
        params = PhysicalParams(
            n=int(phys.get("n", 2)),
            b=float(phys.get("b", 1.0)),
            gravity=float(phys.get("gravity", 1.0)),
            surface_tension=float(phys.get("surface_tension", 1.0)),
            p_ext=float(phys.get("p_ext", 1.0)),
            pressure=Polytropic(float(phys.get("K", 1.0)), float(phys.get("alpha", 1.0))),
            mu=Constant(float(phys.get("mu", 1.0))),
            lam=Constant(float(phys.get("lambda", 1.0))),
        )
        unit = get("grid", "smoothing_unit", None)
        center = get("forcing", "center", None)
        y0 = get("forcing", "y0", None)
        cfg = RunConfig(
            params=params,
            L=float(get("grid", "L", 16.0)),
            nx=int(get("grid", "nx", 64)),
            nz=int(get("grid", "nz", 24)),
            smoothing_unit=None if unit is None else float(unit),
            forcing_kind=get("forcing", "kind", "pressure").strip(),
            center=None if center is None else float(center),
            width=float(get("forcing", "width", 1.0)),
            amplitude=float(get("forcing", "amplitude", 1e-3)),
            y0=None if y0 is None else float(y0),
            direction=tuple(_floats(get("forcing", "direction", "0, 1"))),
            gammas=_floats(get("forcing", "gamma", "1.0")),
            method=get("solver", "method", "newton").strip(),
            monitor_index=float(get("solver", "monitor_index", 0.0)),
            residual_tol=float(get("solver", "residual_tol", 1e-9)),
            max_steps=int(get("solver", "max_steps", 20)),
            gauge=get("solver", "gauge", "whole-line").strip(),
            reg_m=int(get("solver", "reg_m", 2)),
            reg_N=float(get("solver", "reg_N", 100.0)),
            reg_tau=float(get("solver", "reg_tau", 1.0)),
            out=get("output", "directory", "run").strip(),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check the numeric fields against the module preconditions."""
    ok, need = cfg.params.admissible()
    if not ok:
        raise ConfigError(f"physical parameters are not admissible: need {need}")
    if cfg.params.n != 2:
        raise ConfigError("the solver runs in n = 2")
    if cfg.params.gravity <= 0 or cfg.params.b <= 0:
        raise ConfigError("gravity and depth must be positive")
    if cfg.L <= 0 or cfg.nx < 4 or cfg.nx % 2 or cfg.nz < 8:
        raise ConfigError("grid needs L > 0, even nx >= 4 and nz >= 8")
    if not cfg.gammas or any(g <= 0 for g in cfg.gammas):
        raise ConfigError("wave speeds must be positive")
    if cfg.method not in ("newton", "nash-moser"):
        raise ConfigError("solver.method must be newton or nash-moser")
    if cfg.gauge not in ("whole-line", "mean"):
        raise ConfigError("solver.gauge must be whole-line or mean")
    if cfg.forcing_kind not in ("pressure", "bulk", "specific", "none"):
        raise ConfigError(f"unknown forcing kind {cfg.forcing_kind!r}")
    if cfg.width <= 0:
        raise ConfigError("forcing width must be positive")
    if cfg.max_steps < 1 or cfg.residual_tol <= 0:
        raise ConfigError("solver needs max_steps >= 1 and residual_tol > 0")
    if len(cfg.direction) != 2:
        raise ConfigError("forcing direction needs two components")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


# -------------------------------------------------------------- checkpoint
def profile_hash(model: Model) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(model.profile.rho, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(path, state: State, meta: dict) -> None:
    """Container: magic, version, header length, JSON header, then each
    array as little-endian f8 in row-major order, then a SHA-256 digest of
    everything before it."""
    arrays = {"q": state.q, "u": state.u, "eta": state.eta}
    header = {
        "meta": meta,
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
    }
    hb = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<II", VERSION, len(hb)) + hb
    for v in arrays.values():
        body += np.ascontiguousarray(v, dtype="<f8").tobytes()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(path):
    """Returns (State, meta).  Raises CheckpointError on any corruption."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 + 32 or not raw.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch")
    version, hlen = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = len(MAGIC) + 8
    try:
        header = json.loads(body[off : off + hlen])
    except ValueError as exc:
        raise CheckpointError("bad checkpoint header") from exc
    off += hlen
    out = {}
    for a in header["arrays"]:
        n = int(np.prod(a["shape"])) if a["shape"] else 1
        out[a["name"]] = np.frombuffer(body, dtype="<f8", count=n, offset=off).reshape(a["shape"]).copy()
        off += 8 * n
    if off != len(body):
        raise CheckpointError("checkpoint length mismatch")
    return State(out["q"], out["u"], out["eta"]), header["meta"]


# --------------------------------------------------------------- text output
def write_surface_csv(path, grid: Grid, eta) -> None:
    """Columns: x, eta."""
    data = np.column_stack([grid.x, np.asarray(eta, float)])
    np.savetxt(path, data, delimiter=",", header="x,eta", comments="", fmt="%.17g")


def write_comparison_csv(path, grid: Grid, profiles: dict) -> None:
    """Columns: x, then eta at each wave speed (header eta_gamma=<value>)."""
    keys = list(profiles)
    data = np.column_stack([grid.x] + [np.asarray(profiles[k], float) for k in keys])
    header = ",".join(["x"] + [f"eta_gamma={k!r}" for k in keys])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def write_manifest(path, entries: dict, mode: str = "w") -> None:
    with open(path, mode) as fh:
        for key in entries:
            fh.write(f"{key} = {_fmt(entries[key])}\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def config_from_descriptor(desc: dict) -> RunConfig:
    """Rebuild a RunConfig from RunConfig.descriptor() output."""
    sections: dict = {}
    for key, val in desc.items():
        sec, name = key.split(".", 1)
        sections.setdefault(sec, {})[name] = val
    lines = []
    for sec, items in sections.items():
        lines.append(f"[{sec}]")
        for k, v in items.items():
            lines.append(f"{k} = {v}")
    return parse_config("\n".join(lines) + "\n")
