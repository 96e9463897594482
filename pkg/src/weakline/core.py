"""
Shared domain types: complex phase space, the KMS (coherent-state) map,
polynomial phase-space symbols, boundary labels and scenarios.

All quantities are dimensionless; hbar is carried explicitly by a
:class:`Scenario`.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import PoleError, ValidationError

SQRT2 = math.sqrt(2.0)

# forward KMS matrix, (Q, P)^T = KMS (q, p)^T; det KMS = 1
KMS = np.array([[1.0, -1.0j], [-1.0j, 1.0]]) / SQRT2
KMS_INV = np.array([[1.0, 1.0j], [1.0j, 1.0]]) / SQRT2


# # Phase space points

@dataclass(frozen=True)
class ComplexPhasePoint:
    """One point (q, p) of a complexified phase-space trajectory."""
    q: complex
    p: complex

    def __post_init__(self):
        object.__setattr__(self, "q", complex(self.q))
        object.__setattr__(self, "p", complex(self.p))

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p], dtype=complex)

    def is_finite(self) -> bool:
        return cmath.isfinite(self.q) and cmath.isfinite(self.p)


@dataclass(frozen=True)
class KMSPoint:
    """Point in KMS coordinates; Q is the creation, P the annihilation variable."""
    Q: complex
    P: complex

    def __post_init__(self):
        object.__setattr__(self, "Q", complex(self.Q))
        object.__setattr__(self, "P", complex(self.P))


def kms_transform(pt: ComplexPhasePoint) -> KMSPoint:
    """Q = (q - ip)/sqrt2, P = (p - iq)/sqrt2."""
    return KMSPoint((pt.q - 1j * pt.p) / SQRT2, (pt.p - 1j * pt.q) / SQRT2)


def kms_inverse(kp: KMSPoint) -> ComplexPhasePoint:
    return ComplexPhasePoint((kp.Q + 1j * kp.P) / SQRT2, (kp.P + 1j * kp.Q) / SQRT2)


# # Polynomial symbols

Monomial = tuple  # (m, n) exponents of q^m p^n


@dataclass(frozen=True)
class PolynomialSymbol:
    """
    Classical observable sum_{m,n} c_mn q^m p^n.

    Terms are stored as a sorted tuple of ((m, n), coefficient) pairs with
    zero coefficients dropped, so equal polynomials compare equal.
    """
    terms: tuple = ()

    def __post_init__(self):
        merged = {}
        for key, c in (self.terms.items() if isinstance(self.terms, Mapping) else self.terms):
            m, n = (int(k) for k in key)
            if m < 0 or n < 0:
                raise ValidationError(f"negative exponent in monomial {key}")
            merged[(m, n)] = merged.get((m, n), 0.0) + complex(c)
        clean = tuple(sorted((k, c) for k, c in merged.items() if c != 0))
        object.__setattr__(self, "terms", clean)

    # constructors
    @classmethod
    def constant(cls, c) -> "PolynomialSymbol":
        return cls({(0, 0): c})

    @classmethod
    def q(cls) -> "PolynomialSymbol":
        return cls({(1, 0): 1.0})

    @classmethod
    def p(cls) -> "PolynomialSymbol":
        return cls({(0, 1): 1.0})

    @classmethod
    def harmonic(cls, omega: float = 1.0) -> "PolynomialSymbol":
        return cls({(2, 0): omega**2 / 2, (0, 2): 0.5})

    @classmethod
    def quartic(cls, lam: float) -> "PolynomialSymbol":
        """(q^2 + p^2)/2 + lam q^4"""
        return cls({(2, 0): 0.5, (0, 2): 0.5, (4, 0): lam})

    def as_dict(self) -> dict:
        return dict(self.terms)

    @property
    def degree(self) -> int:
        return max((m + n for (m, n), _ in self.terms), default=0)

    def is_real(self) -> bool:
        return all(c.imag == 0 for _, c in self.terms)

    def __call__(self, q, p):
        return eval_symbol_qp(self, q, p)

    def __add__(self, other):
        other = _as_symbol(other)
        return PolynomialSymbol(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialSymbol(tuple((k, -c) for k, c in self.terms))

    def __sub__(self, other):
        return self + (-_as_symbol(other))

    def __mul__(self, other):
        other = _as_symbol(other)
        out = {}
        for (m1, n1), c1 in self.terms:
            for (m2, n2), c2 in other.terms:
                key = (m1 + m2, n1 + n2)
                out[key] = out.get(key, 0.0) + c1 * c2
        return PolynomialSymbol(out)

    __rmul__ = __mul__


def _as_symbol(x) -> PolynomialSymbol:
    if isinstance(x, PolynomialSymbol):
        return x
    return PolynomialSymbol.constant(x)


def eval_symbol_qp(s: PolynomialSymbol, q, p):
    """Evaluate `s` at complex (or array) arguments q, p."""
    total = 0.0 + 0.0j
    for (m, n), c in s.terms:
        total = total + c * q**m * p**n
    return total


def eval_symbol(s: PolynomialSymbol, pt: ComplexPhasePoint) -> complex:
    return complex(eval_symbol_qp(s, pt.q, pt.p))


def symbol_gradient(s: PolynomialSymbol) -> tuple[PolynomialSymbol, PolynomialSymbol]:
    """Exact partial derivatives (ds/dq, ds/dp)."""
    dq = {(m - 1, n): m * c for (m, n), c in s.terms if m > 0}
    dp = {(m, n - 1): n * c for (m, n), c in s.terms if n > 0}
    return PolynomialSymbol(dq), PolynomialSymbol(dp)


# # Boundary labels

@dataclass(frozen=True)
class CoherentLabel:
    """Phase-space center (q, p) of a coherent state."""
    q: float
    p: float

    def __post_init__(self):
        for v in (self.q, self.p):
            if not math.isfinite(v):
                raise ValidationError("coherent label must be finite")

    @property
    def P(self) -> complex:
        """Annihilation-variable eigenvalue, fixed at the initial time."""
        return (self.p - 1j * self.q) / SQRT2

    @property
    def Q(self) -> complex:
        """Creation-variable eigenvalue, fixed at the final time."""
        return (self.q - 1j * self.p) / SQRT2

    def alpha(self, hbar: float = 1.0) -> complex:
        """Fock-space displacement with <q> = q, <p> = p at this hbar."""
        return (self.q + 1j * self.p) / math.sqrt(2.0 * hbar)


@dataclass(frozen=True)
class SpinLabel:
    """Spin-1/2 coherent state direction (theta, phi); theta = pi is rejected."""
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValidationError("spin label must be finite")
        if not 0.0 <= self.theta <= math.pi:
            raise ValidationError(f"theta={self.theta} outside [0, pi]")
        if self.theta == math.pi:
            raise PoleError("theta = pi is the stereographic pole")
        object.__setattr__(self, "phi", self.phi % (2.0 * math.pi))


def spin_stereographic(label: SpinLabel) -> complex:
    """z = exp(i phi) tan(theta/2)."""
    if label.theta >= math.pi:
        raise PoleError("theta = pi is the stereographic pole")
    return cmath.exp(1j * label.phi) * math.tan(label.theta / 2.0)


# # Scenarios

@dataclass(frozen=True)
class CoherentBoundary:
    pre: CoherentLabel
    post: CoherentLabel
    kind: str = field(default="coherent", init=False)


@dataclass(frozen=True)
class SpinBoundary:
    pre: SpinLabel
    post: SpinLabel
    kind: str = field(default="spin", init=False)


@dataclass(frozen=True)
class PositionBoundary:
    pre: float
    post: float
    kind: str = field(default="position", init=False)


Boundary = Union[CoherentBoundary, SpinBoundary, PositionBoundary]

SPIN_ZERO = "zero"


@dataclass(frozen=True)
class Scenario:
    """
    Complete description of one pre/postselected ensemble.

    For spin boundaries `hamiltonian` is the tag ``"zero"``; otherwise it is
    a real-coefficient :class:`PolynomialSymbol`.
    """
    boundary: Boundary
    hamiltonian: Union[PolynomialSymbol, str]
    hbar: float = 1.0
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise ValidationError(f"hbar must be positive, got {self.hbar}")
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValidationError("time window must be finite")
        if not self.t_end > self.t_start:
            raise ValidationError("t_end must exceed t_start")
        if isinstance(self.boundary, SpinBoundary):
            if self.hamiltonian != SPIN_ZERO:
                raise ValidationError('spin scenarios support only hamiltonian "zero"')
        else:
            if not isinstance(self.hamiltonian, PolynomialSymbol):
                raise ValidationError("hamiltonian must be a PolynomialSymbol")
            if not self.hamiltonian.is_real():
                raise ValidationError("hamiltonian coefficients must be real")

    @property
    def kind(self) -> str:
        return self.boundary.kind

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def check_time(self, t: float) -> None:
        if not self.t_start <= t <= self.t_end:
            raise ValidationError(f"t={t} outside [{self.t_start}, {self.t_end}]")


# # Results

METHODS = ("exact", "generating_functional", "semiclassical", "closed_form", "pointer")


@dataclass(frozen=True)
class WeakValueResult:
    value: complex
    time: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if "overlap_abs" not in self.diagnostics:
            raise ValueError("diagnostics must carry overlap_abs")
        object.__setattr__(self, "value", complex(self.value))


# # Scenario JSON

_TOP_KEYS = {"boundary", "hamiltonian", "hbar", "t_start", "t_end"}


def _number(x, what):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError(f"{what} must be a number, got {x!r}")
    return float(x)


def _exact_keys(obj, keys, what):
    if not isinstance(obj, dict):
        raise ValidationError(f"{what} must be an object")
    extra = set(obj) - set(keys)
    missing = set(keys) - set(obj)
    if extra:
        raise ValidationError(f"unknown keys in {what}: {sorted(extra)}")
    if missing:
        raise ValidationError(f"missing keys in {what}: {sorted(missing)}")


def _boundary_from_dict(b) -> Boundary:
    if not isinstance(b, dict) or "kind" not in b:
        raise ValidationError("boundary must be an object with a 'kind'")
    kind = b["kind"]
    _exact_keys(b, ("kind", "pre", "post"), "boundary")
    if kind == "coherent":
        labels = []
        for side in ("pre", "post"):
            _exact_keys(b[side], ("q", "p"), f"boundary.{side}")
            labels.append(CoherentLabel(_number(b[side]["q"], "q"), _number(b[side]["p"], "p")))
        return CoherentBoundary(*labels)
    if kind == "spin":
        labels = []
        for side in ("pre", "post"):
            _exact_keys(b[side], ("theta", "phi"), f"boundary.{side}")
            labels.append(SpinLabel(_number(b[side]["theta"], "theta"),
                                    _number(b[side]["phi"], "phi")))
        return SpinBoundary(*labels)
    if kind == "position":
        return PositionBoundary(_number(b["pre"], "pre"), _number(b["post"], "post"))
    raise ValidationError(f"unknown boundary kind {kind!r}")


def symbol_from_list(rows) -> PolynomialSymbol:
    """Parse ``[[m, n, re, im], ...]`` into a symbol."""
    if not isinstance(rows, list):
        raise ValidationError("symbol must be a list of [m, n, re, im]")
    terms = {}
    for row in rows:
        if not isinstance(row, list) or len(row) != 4:
            raise ValidationError(f"bad symbol term {row!r}")
        m, n = row[0], row[1]
        if isinstance(m, bool) or isinstance(n, bool) or not isinstance(m, int) or not isinstance(n, int):
            raise ValidationError(f"exponents must be integers in {row!r}")
        if m < 0 or n < 0:
            raise ValidationError(f"negative exponent in {row!r}")
        if (m, n) in terms:
            raise ValidationError(f"duplicate monomial {(m, n)}")
        terms[(m, n)] = complex(_number(row[2], "re"), _number(row[3], "im"))
    return PolynomialSymbol(terms)


def symbol_to_list(s: PolynomialSymbol) -> list:
    return [[m, n, c.real, c.imag] for (m, n), c in s.terms]


def scenario_from_dict(d) -> Scenario:
    _exact_keys(d, _TOP_KEYS, "scenario")
    boundary = _boundary_from_dict(d["boundary"])
    h = d["hamiltonian"]
    if isinstance(h, str):
        if h != SPIN_ZERO:
            raise ValidationError(f"unknown hamiltonian tag {h!r}")
        hamiltonian = h
    else:
        hamiltonian = symbol_from_list(h)
    return Scenario(boundary, hamiltonian, _number(d["hbar"], "hbar"),
                    _number(d["t_start"], "t_start"), _number(d["t_end"], "t_end"))


def scenario_to_dict(sc: Scenario) -> dict:
    b = sc.boundary
    if isinstance(b, CoherentBoundary):
        bd = {"kind": "coherent", "pre": {"q": b.pre.q, "p": b.pre.p},
              "post": {"q": b.post.q, "p": b.post.p}}
    elif isinstance(b, SpinBoundary):
        bd = {"kind": "spin", "pre": {"theta": b.pre.theta, "phi": b.pre.phi},
              "post": {"theta": b.post.theta, "phi": b.post.phi}}
    else:
        bd = {"kind": "position", "pre": b.pre, "post": b.post}
    h = sc.hamiltonian if isinstance(sc.hamiltonian, str) else symbol_to_list(sc.hamiltonian)
    return {"boundary": bd, "hamiltonian": h, "hbar": sc.hbar,
            "t_start": sc.t_start, "t_end": sc.t_end}


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValidationError(f"scenario is not valid JSON: {err}") from err
    return scenario_from_dict(d)
