"""Operator configuration files (TOML or JSON) and their canonical hash."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cocycle import JacobiOp
from .elliptic_bridge import EllipticOp
from .errors import StructuralError
from .frequency import Frequency, parse_omega, parse_regime
from .torus_fourier import TorusFun, default_budget


def load_config(path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text.decode())
    return json.loads(text)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def frequency_from(cfg: dict, omega=None, regime=None) -> Frequency:
    """Frequency from config keys ``omega`` / ``regime``, with optional overrides."""
    raw = cfg.get("omega") if omega is None else omega
    if raw is None:
        raise StructuralError("configuration has no 'omega'")
    if isinstance(raw, dict):
        base = Frequency.from_json_dict(raw)
        vec, extra = base.vector, {"regime": base.regime, "gamma": base.gamma, "tau": base.tau}
    else:
        vec, extra = parse_omega(raw), {}
    reg = cfg.get("regime") if regime is None else regime
    if isinstance(reg, dict):
        extra = {"regime": reg.get("regime"), "gamma": reg.get("gamma"), "tau": reg.get("tau")}
    elif reg is not None:
        extra = parse_regime(reg)
    return Frequency(vec, extra.get("regime"), extra.get("gamma"), extra.get("tau"))


def function_from(entry, dim: int, K: int) -> TorusFun:
    """A number, {const, cos: [[k..., amp]], sin: [[k..., amp]]}, or the coefficient-list form."""
    if entry is None:
        return TorusFun.zeros(dim, K)
    if isinstance(entry, (int, float)):
        return TorusFun.constant(float(entry), dim, K)
    if not isinstance(entry, dict):
        raise StructuralError(f"cannot read a torus function from {entry!r}")
    if "coeffs" in entry:
        data = dict(entry)
        data.setdefault("dim", dim)
        return TorusFun.from_json_dict(data, K)
    f = TorusFun.constant(float(entry.get("const", 0.0)), dim, K)
    for key, make in (("cos", TorusFun.cos), ("sin", TorusFun.sin)):
        for term in entry.get(key, []):
            *k, amp = term
            if len(k) != dim:
                raise StructuralError(f"{key} term {term} needs {dim} mode indices")
            f = f + make(tuple(int(x) for x in k), float(amp), dim=dim, K=K)
    return f


def _section(cfg: dict, name: str) -> dict:
    return cfg.get(name, cfg) if isinstance(cfg.get(name), dict) else cfg


def jacobi_from(cfg: dict, omega=None, regime=None) -> JacobiOp:
    cfg = _section(cfg, "jacobi")
    om = frequency_from(cfg, omega, regime)
    K = int(cfg.get("K") or default_budget(om.dim))
    fun = lambda name: function_from(cfg.get(name), om.dim, K)  # noqa: E731
    if "g" not in cfg:
        raise StructuralError("Jacobi configuration needs 'g'")
    return JacobiOp(float(cfg["g"]), fun("W1"), fun("W2"), fun("V"), om, float(cfg.get("scale", 1.0)))


def elliptic_from(cfg: dict, omega=None, regime=None) -> EllipticOp:
    cfg = _section(cfg, "elliptic")
    om = frequency_from(cfg, omega, regime)
    K = int(cfg.get("K") or default_budget(om.dim))
    A1 = function_from(cfg.get("A1", 1.0), om.dim, K)
    return EllipticOp(A1, function_from(cfg.get("A2"), om.dim, K), function_from(cfg.get("W"), om.dim, K), om)
