"""
Complex classical trajectories and the weak values they carry.

The flow of a polynomial Hamiltonian is continued to complex (q, p). Along
with the trajectory we integrate the monodromy matrix M = d(q,p)(t)/d(q,p)(t')
and the action S = int (p dq/dt - H) dt. Klauder's mixed boundary conditions
(fixed P at t', fixed Q at t'') are solved by Newton shooting on Q(t').
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (CoherentBoundary, CoherentLabel, ComplexPhasePoint,
                   PolynomialSymbol, PositionBoundary, Scenario, SpinLabel,
                   WeakValueResult, eval_symbol, kms_inverse, KMSPoint, spin_stereographic,
                   symbol_gradient)
from .errors import (CausticError, NoConvergence, OrthogonalPostselection, StepFailure,
                     UnsupportedBoundary, ValidationError)

LOCAL_TOL = 1e-12
RESIDUAL_TOL = 1e-12
CAUSTIC_THRESHOLD = 0.1
BLOWUP = 1e8
SWEEP_TOL = 1e-8
SWEEP_INTEG_TOL = 1e-9
SWEEP_ITERS = 15
ROOT_SEPARATION = 1e-5


# # Holomorphic Hamilton flow with variational equations

def _compile(s: PolynomialSymbol):
    """Plain-Python evaluator for a symbol; avoids numpy overhead on scalars."""
    if not s.terms:
        return lambda q, p: 0j
    parts = []
    for i, ((m, n), _) in enumerate(s.terms):
        factors = [f"c[{i}]"] + ["q"] * m + ["p"] * n
        parts.append("*".join(factors))
    code = "lambda q, p: " + " + ".join(parts)
    return eval(code, {"c": [complex(c) for _, c in s.terms]})


class _Flow:
    """Right-hand side for y = (q, p, M11, M12, M21, M22, S)."""

    def __init__(self, H: PolynomialSymbol):
        self.symbol = H
        Hq, Hp = symbol_gradient(H)
        Hqq, Hqp = symbol_gradient(Hq)
        _, Hpp = symbol_gradient(Hp)
        self.H, self.Hq, self.Hp = _compile(H), _compile(Hq), _compile(Hp)
        self.Hqq, self.Hqp, self.Hpp = _compile(Hqq), _compile(Hqp), _compile(Hpp)

    def __call__(self, y):
        q, p, m11, m12, m21, m22, _ = y
        hp = self.Hp(q, p)
        hqq, hqp, hpp = self.Hqq(q, p), self.Hqp(q, p), self.Hpp(q, p)
        # dM/dt = J Hess(H) M
        return (hp, -self.Hq(q, p),
                hqp * m11 + hpp * m21, hqp * m12 + hpp * m22,
                -hqq * m11 - hqp * m21, -hqq * m12 - hqp * m22,
                p * hp - self.H(q, p))


def _axpy(y, h, k):
    return tuple(a + h * b for a, b in zip(y, k))


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(_axpy(y, 0.5 * h, k1))
    k3 = f(_axpy(y, 0.5 * h, k2))
    k4 = f(_axpy(y, h, k3))
    return tuple(a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


MAX_SUBSTEPS = 20000


def _advance(f, y, duration, h, tol):
    """
    Integrate over `duration` with step-doubling RK4. Returns (y, last_h).

    Local error is measured componentwise relative to 1 + |y|.
    """
    if duration == 0:
        return y, h
    t = 0.0
    h = min(h, duration)
    min_h = 1e-13 * duration
    for _ in range(MAX_SUBSTEPS):
        if t >= duration:
            return y, h
        h = min(h, duration - t)
        full = _rk4(f, y, h)
        half = _rk4(f, _rk4(f, y, h / 2), h / 2)
        err = max(abs(b - a) / (1.0 + abs(b)) for a, b in zip(full, half)) / 15.0
        if not math.isfinite(err):
            raise StepFailure(f"non-finite state at t={t:.6g}")
        if err <= tol:
            y = tuple(b + (b - a) / 15.0 for a, b in zip(full, half))
            t += h
            if max(abs(c) for c in y) > BLOWUP:
                raise StepFailure(f"trajectory escapes to |y| > {BLOWUP:g} at t={t:.6g}")
            if err > 0:
                h *= min(4.0, max(1.0, 0.9 * (tol / err) ** 0.2))
            else:
                h *= 4.0
        else:
            h *= max(0.1, 0.9 * (tol / err) ** 0.2)
            if h < min_h:
                raise StepFailure(f"step size underflow at t={t:.6g}")
    raise StepFailure(f"more than {MAX_SUBSTEPS} sub-steps")


@dataclass(frozen=True)
class FlowResult:
    times: np.ndarray
    points: np.ndarray          # (n_steps + 1, 2) complex
    monodromy: np.ndarray       # 2x2, final time
    action: complex             # final time
    monodromies: np.ndarray     # (n_steps + 1, 2, 2)
    actions: np.ndarray         # (n_steps + 1,)

    def __iter__(self):
        # unpack as (points, monodromy, action)
        return iter((self.points, self.monodromy, self.action))


def integrate_complex_trajectory(H: PolynomialSymbol, start: ComplexPhasePoint,
                                 t_span, n_steps: int = 64,
                                 tol: float = LOCAL_TOL) -> FlowResult:
    """
    Integrate Hamilton's equations for complex initial data.

    The trajectory is reported on a uniform grid of `n_steps` intervals; the
    adaptive integrator takes as many sub-steps between nodes as `tol` needs.

    Raises
    ------
    StepFailure
        if the flow blows up or the step size collapses.
    """
    if n_steps < 16:
        raise ValidationError("n_steps must be at least 16")
    t0, t1 = (float(x) for x in t_span)
    if not t1 >= t0:
        raise ValidationError("t_span must be increasing")
    f = _Flow(H)
    times = np.linspace(t0, t1, n_steps + 1)
    ys = np.empty((n_steps + 1, 7), dtype=complex)
    y = (complex(start.q), complex(start.p), 1 + 0j, 0j, 0j, 1 + 0j, 0j)
    ys[0] = y
    h = (t1 - t0) / n_steps
    for k in range(n_steps):
        y, h = _advance(f, y, times[k + 1] - times[k], h, tol)
        ys[k + 1] = y
    mono = ys[:, 2:6].reshape(-1, 2, 2)
    return FlowResult(times, ys[:, :2].copy(), mono[-1].copy(), complex(ys[-1, 6]),
                      mono, ys[:, 6].copy())


def _m_QQ(M) -> complex:
    """(KMS M KMS^-1)[0, 0] in closed form; exactly 1 for M = I."""
    return (M[0, 0] + M[1, 1] + 1j * (M[0, 1] - M[1, 0])) / 2


# # Trajectory solutions

@dataclass(frozen=True)
class TrajectorySolution:
    """
    Complex trajectory satisfying a two-point boundary condition.

    ``amplitude`` is set only for position boundaries. ``roots`` lists every
    distinct converged Q(t') found (coherent case); the selected one is first.
    """
    hamiltonian: PolynomialSymbol
    kind: str
    hbar: float
    times: np.ndarray
    points: np.ndarray
    monodromy: np.ndarray
    action: complex
    residual: float
    newton_iters: int
    multi_root_flag: bool = False
    amplitude: complex = None
    roots: tuple = ()
    boundary_phase: complex = 0j
    log_norm: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def start(self) -> ComplexPhasePoint:
        return ComplexPhasePoint(*self.points[0])

    @property
    def m_QQ(self) -> complex:
        """dQ(t'')/dQ(t') at fixed P(t')."""
        return complex(_m_QQ(self.monodromy))

    @property
    def m_qp(self) -> complex:
        """dq(t'')/dp(t') at fixed q(t')."""
        return complex(self.monodromy[0, 1])

    def point_at(self, t: float) -> ComplexPhasePoint:
        """Trajectory at any t in the window, re-integrated from the nearest node."""
        if not self.t_start - 1e-12 <= t <= self.t_end + 1e-12:
            raise ValidationError(f"t={t} outside the trajectory window")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 1)
        dt = t - self.times[k]
        if dt <= 0:
            return ComplexPhasePoint(*self.points[k])
        y = (complex(self.points[k, 0]), complex(self.points[k, 1]), 1 + 0j, 0j, 0j, 1 + 0j, 0j)
        y, _ = _advance(_Flow(self.hamiltonian), y, dt, dt, LOCAL_TOL)
        return ComplexPhasePoint(y[0], y[1])

    def overlap_abs(self) -> float:
        """Magnitude of the exponential part of the semiclassical kernel."""
        return float(math.exp((1j * self.boundary_phase / self.hbar).real - self.log_norm))


def _kms_phase_terms(start, end):
    # p dq - P dQ = d(pq/2 + i(p^2 + q^2)/4)
    def g(q, p):
        return p * q / 2 + 1j * (p * p + q * q) / 4
    Qs = (start[0] - 1j * start[1]) / math.sqrt(2)
    Ps = (start[1] - 1j * start[0]) / math.sqrt(2)
    return g(*start) - g(*end) + Qs * Ps


def _coherent_attempt(flow_args, P0, Q_target, Q_seed, tol, max_iter, integ_tol=LOCAL_TOL):
    """Damped Newton on Q(t') -> Q(t'') - Q''. Returns (Q0, result, residual, iters)."""
    H, t_span, n_steps = flow_args

    def shoot(Q0):
        pt = kms_inverse(KMSPoint(Q0, P0))
        res = integrate_complex_trajectory(H, pt, t_span, n_steps, integ_tol)
        q1, p1 = res.points[-1]
        return res, (q1 - 1j * p1) / math.sqrt(2) - Q_target

    Q0 = complex(Q_seed)
    res, F = shoot(Q0)
    best = (Q0, res, abs(F))
    for it in range(1, max_iter + 1):
        dF = _m_QQ(res.monodromy)
        if dF == 0 or not cmath.isfinite(dF):
            break
        step = F / dF
        lam = 1.0
        while lam > 1e-3:
            try:
                new_res, new_F = shoot(Q0 - lam * step)
            except StepFailure:
                lam /= 2
                continue
            if abs(new_F) < abs(F) or abs(new_F) <= tol:
                break
            lam /= 2
        else:
            break
        Q0, res, F = Q0 - lam * step, new_res, new_F
        if abs(F) < best[2]:
            best = (Q0, res, abs(F))
        if abs(F) <= tol:
            return Q0, res, abs(F), it
    return best[0], best[1], best[2], max_iter


def shoot_coherent_bvp(scenario: Scenario, n_steps: int = 64, tol: float = RESIDUAL_TOL,
                       max_iter: int = 30, multistart: str = "auto",
                       grid_radius: float = 2.0, grid_size: int = 5,
                       seed: complex = None) -> TrajectorySolution:
    """
    Solve P(t') = P', Q(t'') = Q'' for the complexified flow.

    The Newton unknown is Q(t'), seeded with the KMS image of the real label
    (q', p') unless `seed` is given (continuation along a sweep).
    ``multistart`` is ``"auto"`` (sweep a grid of starts only if the seed
    fails), ``"always"`` (sweep anyway, to detect competing roots) or
    ``"never"``. The root closest to the seed is selected; other roots within
    `grid_radius` of it raise ``multi_root_flag``.
    """
    b = scenario.boundary
    if not isinstance(b, CoherentBoundary):
        raise UnsupportedBoundary("shoot_coherent_bvp needs a coherent boundary")
    if multistart not in ("auto", "always", "never"):
        raise ValidationError(f"bad multistart mode {multistart!r}")
    H = scenario.hamiltonian
    P0, Q_target = b.pre.P, b.post.Q
    seed = b.pre.Q if seed is None else complex(seed)
    flow_args = (H, (scenario.t_start, scenario.t_end), n_steps)

    found = []   # (Q0, result, residual, iters)
    total_iters = 0
    best_residual = math.inf
    try:
        att = _coherent_attempt(flow_args, P0, Q_target, seed, tol, max_iter)
        total_iters += att[3]
        best_residual = att[2]
        if att[2] <= tol:
            found.append(att)
    except StepFailure:
        pass

    if multistart == "always" or (multistart == "auto" and not found):
        # coarse sweep at a loose tolerance, then polish each new candidate
        offsets = np.linspace(-grid_radius, grid_radius, grid_size)
        candidates = []
        for dr in offsets:
            for di in offsets:
                if dr == 0 and di == 0:
                    continue
                try:
                    att = _coherent_attempt(flow_args, P0, Q_target, seed + dr + 1j * di,
                                            SWEEP_TOL, SWEEP_ITERS, SWEEP_INTEG_TOL)
                except StepFailure:
                    continue
                total_iters += att[3]
                if att[2] <= SWEEP_TOL and all(abs(att[0] - c) > ROOT_SEPARATION * (1 + abs(c))
                                               for c in candidates):
                    candidates.append(att[0])
        for c in candidates:
            if any(abs(c - o[0]) <= ROOT_SEPARATION * (1 + abs(o[0])) for o in found):
                continue
            try:
                att = _coherent_attempt(flow_args, P0, Q_target, c, tol, max_iter)
            except StepFailure:
                continue
            total_iters += att[3]
            best_residual = min(best_residual, att[2])
            if att[2] <= tol and all(abs(att[0] - o[0]) > ROOT_SEPARATION * (1 + abs(o[0]))
                                     for o in found):
                found.append(att)
    if not found:
        raise NoConvergence(f"no Klauder trajectory found (best residual {best_residual:.3g})",
                            best_residual)

    found.sort(key=lambda a: abs(a[0] - seed))
    Q0, res, residual, _ = found[0]
    competing = [a for a in found[1:] if abs(a[0] - Q0) <= grid_radius]
    start, end = res.points[0], res.points[-1]
    phase = res.action + _kms_phase_terms(start, end)
    log_norm = (b.pre.q ** 2 + b.pre.p ** 2 + b.post.q ** 2 + b.post.p ** 2) / (4 * scenario.hbar)
    return TrajectorySolution(
        hamiltonian=H, kind="coherent", hbar=scenario.hbar, times=res.times,
        points=res.points, monodromy=res.monodromy, action=res.action,
        residual=float(residual), newton_iters=total_iters,
        multi_root_flag=bool(competing), roots=tuple(complex(a[0]) for a in found),
        boundary_phase=complex(phase), log_norm=float(log_norm),
        diagnostics={"n_roots": float(len(found)), "n_competing": float(len(competing))},
    )


def shoot_position_bvp(scenario: Scenario, n_steps: int = 64) -> TrajectorySolution:
    """
    Solve q(t') = q', q(t'') = q'' for a Hamiltonian of degree <= 2.

    The flow is affine, so one integration from the origin gives the linear
    system for p(t'); no Newton iteration is needed.

    Raises
    ------
    CausticError
        if dq''/dp' vanishes (no unique trajectory, amplitude diverges).
    """
    b = scenario.boundary
    if not isinstance(b, PositionBoundary):
        raise UnsupportedBoundary("shoot_position_bvp needs a position boundary")
    H = scenario.hamiltonian
    if H.degree > 2:
        raise UnsupportedBoundary("position boundaries are solved only for quadratic H")
    span = (scenario.t_start, scenario.t_end)
    base = integrate_complex_trajectory(H, ComplexPhasePoint(0, 0), span, n_steps)
    M = base.monodromy
    if abs(M[0, 1]) < 1e-12:
        raise CausticError(f"|dq''/dp'| = {abs(M[0, 1]):.3g}: caustic")
    p0 = (b.post - M[0, 0] * b.pre - base.points[-1, 0]) / M[0, 1]
    res = integrate_complex_trajectory(H, ComplexPhasePoint(b.pre, p0), span, n_steps)
    residual = abs(res.points[-1, 0] - b.post)
    amp = 1.0 / cmath.sqrt(2 * math.pi * scenario.hbar * res.monodromy[0, 1])
    return TrajectorySolution(
        hamiltonian=H, kind="position", hbar=scenario.hbar, times=res.times,
        points=res.points, monodromy=res.monodromy, action=res.action,
        residual=float(residual), newton_iters=0, amplitude=complex(amp),
        boundary_phase=complex(res.action),
    )


def continue_windows(scenario: Scenario, t_ends, **kwargs):
    """
    Solve the coherent problem for growing windows [t', t_end], seeding each
    solve with the previous root so the selected trajectory stays on the
    branch connected to the short-time one.
    """
    out = []
    seed = kwargs.pop("seed", None)
    for t_end in t_ends:
        sc = Scenario(scenario.boundary, scenario.hamiltonian, scenario.hbar,
                      scenario.t_start, float(t_end))
        traj = shoot_coherent_bvp(sc, seed=seed, **kwargs)
        seed = traj.roots[0]
        out.append(traj)
    return out


def solve_trajectory(scenario: Scenario, **kwargs) -> TrajectorySolution:
    if isinstance(scenario.boundary, CoherentBoundary):
        return shoot_coherent_bvp(scenario, **kwargs)
    if isinstance(scenario.boundary, PositionBoundary):
        return shoot_position_bvp(scenario, **{k: v for k, v in kwargs.items() if k == "n_steps"})
    raise UnsupportedBoundary("spin scenarios use spin_weak_values_semiclassical")


# # Observables on trajectories

def action_and_amplitude(traj: TrajectorySolution):
    """
    Classical action and Van Vleck amplitude.

    Returns ``(S, E)`` where E is None for coherent boundaries; there the
    relevant monodromy entry is ``traj.m_QQ``.
    """
    if traj.kind == "position":
        if abs(traj.m_qp) < 1e-12:
            raise CausticError("dq''/dp' vanishes")
        E = 1.0 / cmath.sqrt(2 * math.pi * traj.hbar * traj.m_qp)
        return traj.action, E
    return traj.action, None


def caustic_diagnostic(traj: TrajectorySolution, threshold: float = CAUSTIC_THRESHOLD):
    """(indicator, flagged): |M_QQ| or |M_qp|, flagged below `threshold` or on multiple roots."""
    indicator = abs(traj.m_qp) if traj.kind == "position" else abs(traj.m_QQ)
    return indicator, bool(indicator < threshold or traj.multi_root_flag)


def weak_value_semiclassical(traj: TrajectorySolution, A: PolynomialSymbol,
                             t: float) -> WeakValueResult:
    """Leading-order weak value: the classical symbol on the complex trajectory."""
    value = eval_symbol(A, traj.point_at(t))
    indicator, flagged = caustic_diagnostic(traj)
    return WeakValueResult(value, t, "semiclassical", {
        "overlap_abs": traj.overlap_abs(),
        "residual": traj.residual,
        "caustic_indicator": indicator,
        "caustic_flag": float(flagged),
        "multi_root_flag": float(traj.multi_root_flag),
    })


def weak_variance_semiclassical(traj: TrajectorySolution, A: PolynomialSymbol,
                                t: float) -> complex:
    """W(A^2) - W(A)^2 at leading order; vanishes identically."""
    pt = traj.point_at(t)
    return eval_symbol(A * A, pt) - eval_symbol(A, pt) ** 2


def closed_form_h0(pre: CoherentLabel, post: CoherentLabel) -> ComplexPhasePoint:
    """Constant Klauder trajectory for H = 0."""
    q = 0.5 * (post.q + pre.q) - 0.5j * (post.p - pre.p)
    p = 0.5 * (post.p + pre.p) + 0.5j * (post.q - pre.q)
    return ComplexPhasePoint(q, p)


# # Spin-1/2 with vanishing Hamiltonian

@dataclass(frozen=True)
class SpinTrajectory:
    z: complex   # forward stereographic variable
    w: complex   # backward variable, continuation of conj(z)


def spin_trajectory_h0(pre: SpinLabel, post: SpinLabel) -> SpinTrajectory:
    z = spin_stereographic(pre)
    w = spin_stereographic(post).conjugate()
    return SpinTrajectory(z, w)


def spin_weak_values_semiclassical(pre: SpinLabel, post: SpinLabel):
    """Spin-coherent symbols of (sigma_x, sigma_y, sigma_z) with conj(z) -> w."""
    tr = spin_trajectory_h0(pre, post)
    z, w = tr.z, tr.w
    den = 1 + z * w
    if abs(den) < 1e-14:
        raise OrthogonalPostselection(f"|1 + z w| = {abs(den):.3g}")
    return ((z + w) / den, 1j * (w - z) / den, (1 - z * w) / den)
