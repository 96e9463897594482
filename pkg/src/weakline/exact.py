"""
Exact weak values in finite-dimensional Hilbert spaces.

Two-level systems use the {|up>, |down>} basis; oscillator scenarios use a
truncated Fock basis with q = sqrt(hbar/2)(a + a^dag), p = -i sqrt(hbar/2)(a - a^dag).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg as sla
from scipy.stats import poisson

from .core import (CoherentBoundary, CoherentLabel, PolynomialSymbol, Scenario,
                   SpinBoundary, SpinLabel, WeakValueResult, SPIN_ZERO)
from .errors import (AlignmentError, LogBranchError, OrthogonalPostselection,
                     TailError, TruncationError, UnsupportedBoundary, ValidationError,
                     WeaklineError)

TAIL_TOL = 1e-14
GUARD_LEVELS = 8
ANHARMONIC_GUARD_PER_DEGREE = 16   # q^4 dynamics leak well past the coherent tail
ORTHOGONAL_TOL = 1e-300

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


@dataclass(frozen=True)
class HilbertSpec:
    kind: str
    dim: int = 2

    def __post_init__(self):
        if self.kind == "qubit":
            object.__setattr__(self, "dim", 2)
        elif self.kind == "fock":
            if int(self.dim) != self.dim or self.dim < 2:
                raise ValidationError(f"fock dim must be an integer >= 2, got {self.dim}")
            object.__setattr__(self, "dim", int(self.dim))
        else:
            raise ValidationError(f"unknown Hilbert space kind {self.kind!r}")

    @classmethod
    def qubit(cls) -> "HilbertSpec":
        return cls("qubit")

    @classmethod
    def fock(cls, dim: int) -> "HilbertSpec":
        return cls("fock", dim)


@dataclass(frozen=True)
class SourceProfile:
    """Piecewise-constant source zeta(t); ``bins`` holds (t_lo, t_hi, strength)."""
    bins: tuple = ()

    def __post_init__(self):
        bins = tuple(sorted((float(lo), float(hi), float(s)) for lo, hi, s in self.bins))
        for lo, hi, _ in bins:
            if not hi > lo:
                raise ValidationError(f"empty source bin [{lo}, {hi}]")
        for (_, hi, _), (lo, _, _) in zip(bins, bins[1:]):
            if lo < hi:
                raise ValidationError("source bins overlap")
        object.__setattr__(self, "bins", bins)


# # Operators

def ladder(dim: int) -> np.ndarray:
    """Annihilation operator a on the first `dim` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def _weyl_monomial(m: int, n: int, qh: np.ndarray, ph: np.ndarray) -> np.ndarray:
    # McCoy: Weyl(q^m p^n) = 2^-m sum_k C(m,k) q^(m-k) p^n q^k
    mp = np.linalg.matrix_power
    pn = mp(ph, n)
    out = np.zeros_like(qh)
    for k in range(m + 1):
        out += comb(m, k) * (mp(qh, m - k) @ pn @ mp(qh, k))
    return out / 2**m


def build_operator(s: PolynomialSymbol, space: HilbertSpec, hbar: float = 1.0) -> np.ndarray:
    """
    Weyl-ordered quantization of a polynomial symbol on a truncated Fock space.

    Monomials are built on a space padded by the symbol degree and then
    cropped, so every returned matrix element equals the untruncated one.

    Raises
    ------
    TruncationError
        if ``space.dim < m + n + 1`` for some monomial.
    """
    if space.kind != "fock":
        raise UnsupportedBoundary("polynomial symbols need a Fock space")
    dim = space.dim
    for (m, n), _ in s.terms:
        if dim < m + n + 1:
            raise TruncationError(f"dim={dim} too small for monomial q^{m} p^{n}")
    big = dim + s.degree
    a = ladder(big)
    ad = a.conj().T
    c = math.sqrt(hbar / 2.0)
    qh = c * (a + ad)
    ph = -1j * c * (a - ad)
    out = np.zeros((big, big), dtype=complex)
    for (m, n), coeff in s.terms:
        out += coeff * _weyl_monomial(m, n, qh, ph)
    return out[:dim, :dim]


def is_hermitian(M: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) < tol)


# # States

def coherent_tail(alpha: complex, dim: int) -> float:
    """Weight of a coherent state on Fock levels n >= dim."""
    return float(poisson.sf(dim - 1, abs(alpha) ** 2))


def fock_dim_for(alphas, tol: float = TAIL_TOL, guard: int = GUARD_LEVELS) -> int:
    """Smallest cutoff with every coherent tail below `tol`, plus guard levels."""
    dim = 1
    for alpha in alphas:
        while coherent_tail(alpha, dim) >= tol:
            dim += 1
    return max(dim + guard, 2)


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    tail = coherent_tail(alpha, dim)
    if tail > TAIL_TOL:
        raise TailError(f"coherent tail {tail:.3g} beyond dim={dim} exceeds {TAIL_TOL}")
    c = np.empty(dim, dtype=complex)
    c[0] = cmath.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return c / np.linalg.norm(c)


def spin_state(label: SpinLabel) -> np.ndarray:
    return np.array([math.cos(label.theta / 2),
                     cmath.exp(1j * label.phi) * math.sin(label.theta / 2)])


def state_vector(label, space: HilbertSpec, hbar: float = 1.0) -> np.ndarray:
    if isinstance(label, SpinLabel):
        if space.kind != "qubit":
            raise UnsupportedBoundary("spin labels live in a qubit space")
        return spin_state(label)
    if isinstance(label, CoherentLabel):
        if space.kind != "fock":
            raise UnsupportedBoundary("coherent labels live in a Fock space")
        return coherent_state(label.alpha(hbar), space.dim)
    raise UnsupportedBoundary(f"no normalizable state for label {label!r}")


def hilbert_space(scenario: Scenario, guard: int = None) -> HilbertSpec:
    """
    Default space for a scenario: qubit for spins, tail-criterion Fock cutoff otherwise.

    `guard` defaults to 8 levels for Hamiltonians of degree <= 2 and to
    16 per degree above that.
    """
    b = scenario.boundary
    if isinstance(b, SpinBoundary):
        return HilbertSpec.qubit()
    if isinstance(b, CoherentBoundary):
        degree = scenario.hamiltonian.degree
        if guard is None:
            guard = GUARD_LEVELS if degree <= 2 else ANHARMONIC_GUARD_PER_DEGREE * degree
        alphas = [b.pre.alpha(scenario.hbar), b.post.alpha(scenario.hbar)]
        dim = max(fock_dim_for(alphas, guard=guard), degree + 2)
        return HilbertSpec.fock(dim)
    raise UnsupportedBoundary("position eigenstates are handled only semiclassically")


def hamiltonian_matrix(scenario: Scenario, space: HilbertSpec) -> np.ndarray:
    if isinstance(scenario.hamiltonian, str):
        assert scenario.hamiltonian == SPIN_ZERO
        return np.zeros((space.dim, space.dim), dtype=complex)
    return build_operator(scenario.hamiltonian, space, scenario.hbar)


# # Dynamics

class _Evolution:
    """exp(-i H dt / hbar) for many dt from one eigendecomposition."""

    def __init__(self, H, hbar):
        self.hbar = hbar
        self.zero = not np.any(H)
        if not self.zero:
            self.e, self.V = np.linalg.eigh(H)

    def __call__(self, dt):
        if self.zero or dt == 0:
            return None
        phase = np.exp(-1j * self.e * dt / self.hbar)
        return (self.V * phase) @ self.V.conj().T

    def apply(self, dt, psi):
        if self.zero or dt == 0:
            return psi.copy()
        return self.V @ (np.exp(-1j * self.e * dt / self.hbar) * (self.V.conj().T @ psi))


def propagate(H: np.ndarray, dt: float, hbar: float = 1.0) -> np.ndarray:
    """Unitary exp(-i H dt / hbar) via Hermitian eigendecomposition."""
    if dt < 0:
        raise ValidationError("dt must be non-negative")
    if not is_hermitian(H):
        raise ValidationError("propagate needs a Hermitian generator")
    U = _Evolution(H, hbar)(dt)
    return np.eye(H.shape[0], dtype=complex) if U is None else U


def _expm_generator(G: np.ndarray, dt: float, hbar: float) -> np.ndarray:
    if is_hermitian(G):
        e, V = np.linalg.eigh(G)
        return (V * np.exp(-1j * e * dt / hbar)) @ V.conj().T
    return sla.expm(-1j * G * dt / hbar)


def two_state_vectors(scenario: Scenario, t: float, space: HilbertSpec = None, H=None):
    """
    Forward-evolved preselection and backward-evolved postselection at `t`.

    Returns ``(ket, bra)`` with ket = U(t, t')|psi'> and bra = U(t'', t)^dag |psi''>,
    so that any weak value is ``bra^dag A ket / bra^dag ket``.
    """
    scenario.check_time(t)
    space = space or hilbert_space(scenario)
    if H is None:
        H = hamiltonian_matrix(scenario, space)
    b = scenario.boundary
    pre = state_vector(b.pre, space, scenario.hbar)
    post = state_vector(b.post, space, scenario.hbar)
    ev = _Evolution(H, scenario.hbar)
    ket = ev.apply(t - scenario.t_start, pre)
    bra = ev.apply(-(scenario.t_end - t), post)
    return ket, bra


def _weak_ratio(bra, A, ket):
    den = np.vdot(bra, ket)
    if abs(den) < ORTHOGONAL_TOL:
        raise OrthogonalPostselection(f"|<post|pre>| = {abs(den):.3g}")
    return np.vdot(bra, A @ ket) / den, abs(den)


def weak_value_exact(scenario: Scenario, A: np.ndarray, t: float,
                     space: HilbertSpec = None, H=None) -> WeakValueResult:
    """<psi''|U(t'',t) A U(t,t')|psi'> / <psi''|U(t'',t')|psi'>."""
    space = space or hilbert_space(scenario)
    ket, bra = two_state_vectors(scenario, t, space, H)
    w, overlap = _weak_ratio(bra, A, ket)
    return WeakValueResult(complex(w), t, "exact", {"overlap_abs": overlap})


def weak_variance_exact(scenario: Scenario, A: np.ndarray, t: float,
                        space: HilbertSpec = None, H=None) -> complex:
    """Weak value of (A - W(A))^2, cross-checked against W(A^2) - W(A)^2."""
    space = space or hilbert_space(scenario)
    ket, bra = two_state_vectors(scenario, t, space, H)
    w, _ = _weak_ratio(bra, A, ket)
    B = A - w * np.eye(A.shape[0])
    var, _ = _weak_ratio(bra, B @ B, ket)
    w2, _ = _weak_ratio(bra, A @ A, ket)
    alt = w2 - w * w
    scale = max(1.0, abs(w2), abs(w) ** 2)
    if abs(var - alt) > 1e-10 * scale:
        raise WeaklineError(f"weak variance routes disagree: {var} vs {alt}")
    return complex(var)


# # Generating functional

def _check_profile(scenario, zeta):
    for lo, hi, _ in zeta.bins:
        if lo < scenario.t_start - 1e-12 or hi > scenario.t_end + 1e-12:
            raise ValidationError(f"source bin [{lo}, {hi}] leaves the time window")


def _time_ordered_amplitude(scenario, A, zeta, space, H):
    """<psi''| T exp(-i/hbar int (H - zeta A) dt) |psi'> for piecewise-constant zeta."""
    hbar = scenario.hbar
    b = scenario.boundary
    psi = state_vector(b.pre, space, hbar)
    post = state_vector(b.post, space, hbar)
    ev = _Evolution(H, hbar)
    t = scenario.t_start
    for lo, hi, strength in zeta.bins:
        psi = ev.apply(lo - t, psi)
        psi = _expm_generator(H - strength * A, hi - lo, hbar) @ psi
        t = hi
    psi = ev.apply(scenario.t_end - t, psi)
    return complex(np.vdot(post, psi))


def generating_functional(scenario: Scenario, A: np.ndarray, zeta: SourceProfile,
                          space: HilbertSpec = None, n_steps: int = 64, H=None) -> complex:
    """
    Transition amplitude with source term -zeta(t) A added to the Hamiltonian.

    The window is cut into `n_steps` equal steps and every bin edge must land on
    a step edge. Within a bin the generator is constant, so consecutive steps are
    merged into one exact exponential.
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be positive")
    _check_profile(scenario, zeta)
    dt = scenario.duration / n_steps
    for lo, hi, _ in zeta.bins:
        for edge in (lo, hi):
            k = (edge - scenario.t_start) / dt
            if abs(k - round(k)) > 1e-9:
                raise AlignmentError(f"bin edge {edge} is not on the {n_steps}-step grid")
    space = space or hilbert_space(scenario)
    if H is None:
        H = hamiltonian_matrix(scenario, space)
    return _time_ordered_amplitude(scenario, A, zeta, space, H)


def weak_value_via_gf(scenario: Scenario, A: np.ndarray, t: float,
                      space: HilbertSpec = None, epsilon: float = 1e-5,
                      bin_width: float = None, H=None) -> WeakValueResult:
    """
    Weak value as -i hbar times the logarithmic derivative of the generating
    functional with respect to a source bin of width `bin_width` centred on `t`.

    Central differencing in epsilon cancels the O(epsilon) term; the
    remaining bias comes from averaging over the bin.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if bin_width is None:
        bin_width = scenario.duration / 64
    lo, hi = t - bin_width / 2, t + bin_width / 2
    tol = 1e-12 * max(1.0, abs(scenario.t_end))
    if bin_width <= 0 or lo < scenario.t_start - tol or hi > scenario.t_end + tol:
        raise ValidationError(f"bin [{lo}, {hi}] not inside the time window")
    lo, hi = max(lo, scenario.t_start), min(hi, scenario.t_end)
    space = space or hilbert_space(scenario)
    if H is None:
        H = hamiltonian_matrix(scenario, space)

    def Z(strength):
        prof = SourceProfile(((lo, hi, strength),)) if strength else SourceProfile()
        return _time_ordered_amplitude(scenario, A, prof, space, H)

    z0, zp, zm = Z(0.0), Z(epsilon), Z(-epsilon)
    if abs(z0) < ORTHOGONAL_TOL:
        raise OrthogonalPostselection(f"|Z(0)| = {abs(z0):.3g}")
    rp, rm = zp / z0, zm / z0
    # a ratio in the left half-plane means Z swept past zero: branch undecidable
    if rp.real <= 0 or rm.real <= 0:
        raise LogBranchError(f"Z ratios {rp}, {rm} leave the principal sheet")
    dlog = cmath.log(rp) - cmath.log(rm)
    w = -1j * scenario.hbar * dlog / (2 * epsilon * (hi - lo))
    return WeakValueResult(w, t, "generating_functional",
                           {"overlap_abs": abs(z0), "epsilon": epsilon,
                            "bin_width": hi - lo})


# # Spin-1/2

def spin_weak_values_exact(pre: SpinLabel, post: SpinLabel, H_spin=None, t: float = 0.0,
                           t_start: float = 0.0, t_end: float = 1.0, hbar: float = 1.0):
    """(W(sigma_x), W(sigma_y), W(sigma_z)) for spin-1/2 coherent pre/post states."""
    H = np.zeros((2, 2), dtype=complex) if H_spin is None else np.asarray(H_spin, dtype=complex)
    if H.shape != (2, 2) or not is_hermitian(H):
        raise ValidationError("H_spin must be a 2x2 Hermitian matrix")
    if not t_start <= t <= t_end:
        raise ValidationError(f"t={t} outside [{t_start}, {t_end}]")
    ev = _Evolution(H, hbar)
    ket = ev.apply(t - t_start, spin_state(pre))
    bra = ev.apply(-(t_end - t), spin_state(post))
    return tuple(complex(_weak_ratio(bra, PAULI[k], ket)[0]) for k in "xyz")
