"""
Von Neumann pointer model with postselection.

An impulsive coupling exp(-i g A (x) p_x / hbar) shifts a Gaussian pointer by
g a_j on each eigenspace of A. After projecting the system onto the
postselected state the pointer is a finite superposition of equal-width
Gaussians, so every moment has a closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import WeakValueResult
from .errors import ValidationError, ZeroNorm

ZERO_NORM_TOL = 1e-300
DEGENERACY_TOL = 1e-10
WEAKNESS = 25.0   # default ladder keeps g * max|a| <= sigma / WEAKNESS


@dataclass(frozen=True)
class PointerConfig:
    g: float
    sigma: float
    hbar: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.g):
            raise ValidationError("coupling g must be finite")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError("pointer width sigma must be positive")
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise ValidationError("hbar must be positive")


@dataclass(frozen=True)
class PointerState:
    """phi(x) = sum_j weights[j] G(x - centers[j]), G normalized with <x^2> = sigma^2."""
    weights: np.ndarray
    centers: np.ndarray
    sigma: float
    hbar: float
    norm: float

    @property
    def components(self):
        return list(zip(self.weights, self.centers))


def _spectral_projections(A, tol=DEGENERACY_TOL):
    """Eigenvalues of Hermitian A with degenerate eigenvectors grouped."""
    A = np.asarray(A, dtype=complex)
    if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12:
        raise ValidationError("pointer coupling needs a Hermitian observable")
    e, V = np.linalg.eigh(A)
    groups = []
    scale = max(1.0, float(np.max(np.abs(e))))
    for k, val in enumerate(e):
        if groups and abs(val - groups[-1][0]) <= tol * scale:
            groups[-1][1].append(k)
        else:
            groups.append((val, [k]))
    return [(float(np.mean(e[idx])), V[:, idx]) for val, idx in groups]


def gaussian_overlaps(centers, sigma, hbar=1.0):
    """
    Matrices <G_i|G_j>, <G_i|x|G_j>, <G_i|x^2|G_j>, <G_i|p|G_j> for equal-width
    real Gaussians centred at `centers`.
    """
    c = np.asarray(centers, dtype=float)
    ci, cj = c[:, None], c[None, :]
    S = np.exp(-(ci - cj) ** 2 / (8 * sigma**2))
    mid = (ci + cj) / 2
    X = mid * S
    X2 = (sigma**2 + mid**2) * S
    P = 1j * hbar * (ci - cj) / (4 * sigma**2) * S
    return S, X, X2, P


def couple_and_postselect(pre, post, A, cfg: PointerConfig) -> PointerState:
    """
    Pointer wavefunction after impulsive coupling to `A` and postselection.

    Components sharing a center (degenerate eigenvalues, or g = 0) are merged.
    """
    pre = np.asarray(pre, dtype=complex)
    post = np.asarray(post, dtype=complex)
    merged = {}
    for a, vecs in _spectral_projections(A):
        w = (post.conj() @ vecs) @ (vecs.conj().T @ pre)
        center = cfg.g * a
        merged[center] = merged.get(center, 0) + w
    centers = np.array(sorted(merged))
    weights = np.array([merged[c] for c in centers], dtype=complex)
    S, _, _, _ = gaussian_overlaps(centers, cfg.sigma, cfg.hbar)
    norm = float(np.real(weights.conj() @ S @ weights))
    if not norm > ZERO_NORM_TOL:
        raise ZeroNorm("postselected pointer state vanishes")
    return PointerState(weights, centers, cfg.sigma, cfg.hbar, norm)


def pointer_moments(ps: PointerState):
    """(mean_x, mean_p, var_x) from closed-form Gaussian overlaps."""
    S, X, X2, P = gaussian_overlaps(ps.centers, ps.sigma, ps.hbar)
    w = ps.weights

    def expect(M):
        return np.real(w.conj() @ M @ w) / ps.norm

    mean_x = expect(X)
    return float(mean_x), float(expect(P)), float(expect(X2) - mean_x**2)


def pointer_density(ps: PointerState, x):
    """|phi(x)|^2 / norm."""
    x = np.asarray(x, dtype=float)
    amp = (2 * math.pi * ps.sigma**2) ** -0.25 * np.exp(
        -(x[..., None] - ps.centers) ** 2 / (4 * ps.sigma**2))
    return np.abs(amp @ ps.weights) ** 2 / ps.norm


def pointer_cdf(ps: PointerState, x):
    """Closed-form cumulative distribution of the pointer position."""
    x = np.asarray(x, dtype=float)
    S, _, _, _ = gaussian_overlaps(ps.centers, ps.sigma, ps.hbar)
    # G_i G_j = S_ij * Normal(mid_ij, sigma^2)
    coef = np.real(ps.weights.conj()[:, None] * ps.weights[None, :] * S)
    mid = (ps.centers[:, None] + ps.centers[None, :]) / 2
    z = (x[..., None, None] - mid) / ps.sigma
    return np.sum(coef * ndtr(z), axis=(-2, -1)) / ps.norm


def momentum_response(sigma: float, hbar: float = 1.0) -> float:
    """Slope d<p>/dg per unit Im W in the weak limit: hbar / (2 sigma^2)."""
    return hbar / (2 * sigma**2)


def default_g_ladder(A, sigma: float, n: int = 4):
    """Halving ladder starting at the weak-regime bound g max|a| = sigma/25."""
    amax = max(abs(a) for a, _ in _spectral_projections(A))
    g0 = sigma / (WEAKNESS * max(amax, 1e-300))
    return [g0 / 2**k for k in range(n)]


def _extrapolate_to_zero(x, y):
    """Neville interpolation of y(x) evaluated at x = 0."""
    x = list(map(float, x))
    table = list(map(complex, y))
    n = len(x)
    for level in range(1, n):
        for i in range(n - level):
            j = i + level
            table[i] = (x[j] * table[i] - x[i] * table[i + 1]) / (x[j] - x[i])
    return table[0]


def recover_weak_value(pre, post, A, sigma: float, hbar: float = 1.0, g_values=None,
                       t: float = float("nan")) -> WeakValueResult:
    """
    Weak value read off the pointer in the g -> 0 limit.

    Re W is the limit of <x>/g and Im W the limit of <p>/(g kappa) with
    kappa = hbar/(2 sigma^2). Both ratios are even in g, so they are
    extrapolated in g^2.
    """
    if g_values is None:
        g_values = default_g_ladder(A, sigma)
    g_values = [float(g) for g in g_values]
    if len(g_values) < 4:
        raise ValidationError("need at least 4 coupling strengths")
    if any(g == 0 for g in g_values) or len(set(abs(g) for g in g_values)) != len(g_values):
        raise ValidationError("coupling strengths must be nonzero and distinct in |g|")
    kappa = momentum_response(sigma, hbar)
    rx, rp = [], []
    for g in g_values:
        mx, mp, _ = pointer_moments(couple_and_postselect(pre, post, A,
                                                          PointerConfig(g, sigma, hbar)))
        rx.append(mx / g)
        rp.append(mp / (g * kappa))
    g2 = [g * g for g in g_values]
    re_w = _extrapolate_to_zero(g2, rx).real
    im_w = _extrapolate_to_zero(g2, rp).real
    overlap = abs(np.vdot(np.asarray(post, dtype=complex), np.asarray(pre, dtype=complex)))
    return WeakValueResult(complex(re_w, im_w), t, "pointer", {
        "overlap_abs": float(overlap),
        "g_min": min(abs(g) for g in g_values),
        "re_spread": float(max(rx) - min(rx)),
        "im_spread": float(max(rp) - min(rp)),
    })


def sample_readouts(ps: PointerState, n: int, seed: int = 0, batch: int = 1 << 18) -> np.ndarray:
    """
    Draw `n` pointer readouts from |phi|^2 / norm.

    Rejection sampling against the mixture sum_j |w_j| Normal(c_j, sigma^2),
    which dominates |phi|^2 after scaling by sum_j |w_j| (Cauchy-Schwarz).
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.empty(0)
    aw = np.abs(ps.weights)
    probs = aw / aw.sum()
    out = []
    have = 0
    while have < n:
        comp = rng.choice(len(probs), size=batch, p=probs)
        x = ps.centers[comp] + ps.sigma * rng.standard_normal(batch)
        g2 = np.exp(-(x[:, None] - ps.centers) ** 2 / (2 * ps.sigma**2))   # G^2 up to a constant
        target = np.abs(np.sqrt(g2) @ ps.weights) ** 2
        envelope = aw.sum() * (g2 @ aw)
        keep = x[rng.random(batch) * envelope < target]
        out.append(keep)
        have += keep.size
    return np.concatenate(out)[:n]
