"""Frequency vectors, continued fractions and small-divisor diagnostics."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ResonanceError, StructuralError
from .torus_fourier import _geometry, default_budget, weighted_length

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0
RESONANCE_FLOOR = 1e-12
RATIONAL_TOL = 1e-15

REGIMES = ("class-p", "independent", "dc-infinity")


@dataclass(frozen=True)
class Frequency:
    """Rotation vector omega with an arithmetic regime tag.

    ``regime`` is one of ``class-p`` (d = 1 default), ``independent``
    (d > 1 default) or ``dc-infinity`` with constants ``gamma``, ``tau``.
    """

    vector: tuple
    regime: str | None = None
    gamma: float | None = None
    tau: float | None = None

    def __post_init__(self):
        vec = tuple(float(x) for x in np.atleast_1d(np.asarray(self.vector, dtype=float)))
        if not vec:
            raise StructuralError("frequency vector is empty")
        object.__setattr__(self, "vector", vec)
        regime = self.regime or ("class-p" if len(vec) == 1 else "independent")
        if regime not in REGIMES:
            raise StructuralError(f"unknown regime {regime!r}; expected one of {REGIMES}")
        if regime == "dc-infinity" and (self.gamma is None or self.tau is None):
            raise StructuralError("dc-infinity regime needs gamma and tau")
        object.__setattr__(self, "regime", regime)

    @property
    def dim(self) -> int:
        return len(self.vector)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=float)

    def __neg__(self):
        return Frequency(tuple(-x for x in self.vector), self.regime, self.gamma, self.tau)

    def inner_frac(self, k) -> np.longdouble:
        """Fractional part of <k, omega> in extended precision."""
        x = sum(np.longdouble(int(kj)) * np.longdouble(wj) for kj, wj in zip(k, self.vector))
        return x - np.floor(x)

    def dist(self, k) -> float:
        """Distance from <k, omega> to the nearest integer."""
        f = self.inner_frac(k)
        return float(min(f, 1 - f))

    def dc_weight(self, k, gamma=None, tau=None):
        gamma = self.gamma if gamma is None else gamma
        tau = self.tau if tau is None else tau
        if gamma is None or tau is None:
            return None
        return dc_weight(k, gamma, tau)

    def mode_fracs(self, K: int) -> np.ndarray:
        """frac(<k, omega>) over the coefficient box of budget K (extended precision)."""
        geom = _geometry(self.dim, K)
        total = np.zeros((), dtype=np.longdouble)
        for ax, w in zip(geom.axes, self.vector):
            total = np.add.outer(total, ax.astype(np.longdouble) * np.longdouble(w))
        return total - np.floor(total)

    def mode_dists(self, K: int) -> np.ndarray:
        f = self.mode_fracs(K)
        return np.minimum(f, 1 - f).astype(float)

    def shift_phases(self, K: int) -> np.ndarray:
        """exp(2 pi i <k, omega>) over the coefficient box."""
        ang = 2 * np.pi * self.mode_fracs(K)
        return (np.cos(ang) + 1j * np.sin(ang)).astype(complex)

    def cohomology_divisors(self, K: int) -> np.ndarray:
        """exp(2 pi i <k, omega>) - 1 over the box, accurate for tiny divisors."""
        x = self.mode_fracs(K)
        half = np.pi * x
        val = 2j * np.sin(half) * (np.cos(half) + 1j * np.sin(half))
        return val.astype(complex)

    def to_json_dict(self) -> dict:
        out = {"omega": list(self.vector), "regime": self.regime}
        if self.regime == "dc-infinity":
            out.update(gamma=self.gamma, tau=self.tau)
        return out

    @classmethod
    def from_json_dict(cls, data) -> "Frequency":
        if isinstance(data, (list, tuple, float, int)):
            return cls(tuple(np.atleast_1d(data)))
        vec = data.get("omega", data.get("vector"))
        if isinstance(vec, str):
            vec = parse_omega(vec)
        return cls(tuple(np.atleast_1d(vec)), data.get("regime"), data.get("gamma"), data.get("tau"))


def dc_weight(k, gamma: float, tau: float) -> float:
    """gamma * prod_j 1 / (1 + |k_j|^tau <j>^tau), axes counted from 1."""
    w = gamma
    for j, kj in enumerate(k):
        w /= 1.0 + (abs(int(kj)) * (j + 1)) ** tau
    return w


@dataclass(frozen=True)
class Rational:
    """Frequency detected as rational (to working precision)."""

    numerator: int
    denominator: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __str__(self):
        return f"Rational({self.numerator}/{self.denominator})"


@dataclass(frozen=True)
class ContinuedFraction:
    value: float
    partial_quotients: tuple
    p: tuple
    q: tuple

    def zeta_estimates(self) -> list:
        """Running values of q_n^(1/n); bounded growth indicates class P numerically."""
        return [qn ** (1.0 / n) for n, qn in enumerate(self.q) if n >= 1]

    def errors(self) -> list:
        return [abs(self.value - pn / qn) for pn, qn in zip(self.p, self.q)]


def continued_fraction(omega: float, depth: int = 20):
    """Partial quotients and convergents p_n/q_n of ``omega``.

    Returns ``Rational`` if some convergent reproduces omega to 1e-15 before
    ``depth`` convergents have been produced.
    """
    if depth < 1:
        raise StructuralError("depth must be positive")
    x = Fraction(omega)
    a_list, p_list, q_list = [], [], []
    p_prev, p_cur = 0, 1
    q_prev, q_cur = 1, 0
    rem = x
    for _ in range(depth + 1):
        a = math.floor(rem)
        a_list.append(a)
        p_prev, p_cur = p_cur, a * p_cur + p_prev
        q_prev, q_cur = q_cur, a * q_cur + q_prev
        p_list.append(p_cur)
        q_list.append(q_cur)
        frac = rem - a
        if abs(float(x - Fraction(p_cur, q_cur))) < RATIONAL_TOL or frac == 0:
            if len(q_list) <= depth:
                return Rational(p_cur, q_cur)
            break
        rem = 1 / frac
    return ContinuedFraction(float(omega), tuple(a_list), tuple(p_list), tuple(q_list))


@dataclass(frozen=True)
class DivisorReport:
    k: tuple
    dist: float
    weight: float | None
    violation: bool
    resonant: bool


def divisor_weight(k, omega: Frequency, gamma=None, tau=None) -> DivisorReport:
    """dist(<k, omega>, Z) together with the DC-infinity lower bound for k != 0."""
    k = tuple(int(x) for x in np.atleast_1d(k))
    if len(k) != omega.dim:
        raise StructuralError(f"mode of length {len(k)} for a {omega.dim}-dimensional frequency")
    if not any(k):
        raise StructuralError("divisor_weight needs k != 0")
    d = omega.dist(k)
    w = omega.dc_weight(k, gamma, tau)
    return DivisorReport(k, d, w, bool(w is not None and d < w), d < RESONANCE_FLOOR)


def _modes_up_to(dim: int, K: int):
    for k in itertools.product(*(range(-(K // j), K // j + 1) for j in range(1, dim + 1))):
        if any(k) and weighted_length(k) <= K:
            yield k


def certify_independent(omega: Frequency, K: int | None = None) -> float:
    """Check dist(<k, omega>, Z) > 1e-12 for all 0 < |k|_1 <= K; return the minimum."""
    K = default_budget(omega.dim) if K is None else K
    d = omega.mode_dists(K)
    geom = _geometry(omega.dim, K)
    live = geom.mask & (geom.weight > 0)
    dd = np.where(live, d, np.inf)
    idx = np.unravel_index(np.argmin(dd), dd.shape)
    worst = float(dd[idx])
    if worst <= RESONANCE_FLOOR:
        k = tuple(int(i - m) for i, m in zip(idx, geom.half))
        raise ResonanceError(f"resonant mode k={k}: dist(<k,omega>, Z) = {worst:.3g}", k=k, divisor=worst)
    return worst


@dataclass(frozen=True)
class DcCertificate:
    certified: bool
    gamma: float
    tau: float
    K: int
    worst_ratio: float
    worst_k: tuple
    violations: int = 0
    notes: dict = field(default_factory=dict)


def certify_dc(omega: Frequency, gamma: float, tau: float, K: int | None = None) -> DcCertificate:
    """Check the DC-infinity inequality for all 0 < |k|_1 <= K."""
    K = default_budget(omega.dim) if K is None else K
    geom = _geometry(omega.dim, K)
    grids = np.meshgrid(*geom.axes, indexing="ij")
    w = np.full(geom.weight.shape, float(gamma))
    for j, g in enumerate(grids):
        w = w / (1.0 + (np.abs(g) * (j + 1)) ** tau)
    live = geom.mask & (geom.weight > 0)
    ratio = np.where(live, omega.mode_dists(K) / w, np.inf)
    idx = np.unravel_index(np.argmin(ratio), ratio.shape)
    k = tuple(int(i - m) for i, m in zip(idx, geom.half))
    viol = int(np.count_nonzero(ratio < 1.0))
    return DcCertificate(viol == 0, gamma, tau, K, float(ratio[idx]), k, viol)


def parse_omega(text) -> tuple:
    """Parse a CLI frequency: decimal, 'golden', 'silver', 'sqrt:N' or a JSON vector."""
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    s = str(text).strip()
    low = s.lower()
    if low == "golden":
        return (GOLDEN,)
    if low == "silver":
        return (SILVER,)
    if low.startswith("sqrt:"):
        n = float(s.split(":", 1)[1])
        r = math.sqrt(n)
        return (r - math.floor(r),)
    if s.startswith("["):
        return tuple(float(x) for x in json.loads(s))
    return (float(s),)


def parse_regime(text: str | None) -> dict:
    """Parse 'class-p', 'independent' or 'dc-infinity:gamma,tau'."""
    if text is None:
        return {}
    s = text.strip().lower()
    if s.startswith("dc-infinity"):
        _, _, rest = s.partition(":")
        try:
            gamma, tau = (float(x) for x in rest.split(","))
        except ValueError as exc:
            raise StructuralError("dc-infinity regime expects 'dc-infinity:gamma,tau'") from exc
        return {"regime": "dc-infinity", "gamma": gamma, "tau": tau}
    if s not in ("class-p", "independent"):
        raise StructuralError(f"unknown regime {text!r}")
    return {"regime": s}
