import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from weakline.core import (CoherentBoundary, CoherentLabel, PolynomialSymbol, Scenario,
                           SpinBoundary, SpinLabel, PositionBoundary)
from weakline.errors import (AlignmentError, OrthogonalPostselection, TailError,
                             TruncationError, UnsupportedBoundary, ValidationError)
from weakline.exact import (PAULI, SIGMA_X, SIGMA_Y, SIGMA_Z, HilbertSpec, SourceProfile,
                            build_operator, coherent_state, fock_dim_for, generating_functional,
                            hamiltonian_matrix, hilbert_space, is_hermitian, propagate,
                            spin_state, spin_weak_values_exact, state_vector, two_state_vectors,
                            weak_value_exact, weak_value_via_gf, weak_variance_exact,
                            _weak_ratio)
from weakline.goldens import coherent_h0_scenario, harmonic_scenario, spin_scenario

SQ3 = math.sqrt(3)


# # Operators

def test_position_operator_dim2():
    Q = build_operator(PolynomialSymbol.q(), HilbertSpec.fock(2), 1.0)
    r = math.sqrt(0.5)
    assert np.allclose(Q, [[0, r], [r, 0]], atol=1e-15)


def test_position_matrix_elements():
    hbar = 0.7
    Q = build_operator(PolynomialSymbol.q(), HilbertSpec.fock(12), hbar)
    for m in range(12):
        for n in range(12):
            ref = math.sqrt(hbar / 2) * (math.sqrt(n) * (m == n - 1) + math.sqrt(n + 1) * (m == n + 1))
            assert abs(Q[m, n] - ref) < 1e-14


def test_constant_symbol_is_identity():
    assert np.allclose(build_operator(PolynomialSymbol.constant(1), HilbertSpec.fock(7)), np.eye(7))


def test_harmonic_spectrum():
    H = build_operator(PolynomialSymbol.harmonic(), HilbertSpec.fock(10), 1.0)
    # padded build: even the top diagonal entry is exact
    assert np.allclose(np.diag(H).real[:-1], np.arange(9) + 0.5, atol=1e-12)
    assert np.allclose(H - np.diag(np.diag(H)), 0, atol=1e-12)


def test_weyl_ordering_qp():
    # Weyl(qp) = (qp + pq)/2, checked away from the truncation edge
    dim, hbar = 20, 1.3
    Qb = build_operator(PolynomialSymbol.q(), HilbertSpec.fock(dim + 4), hbar)
    Pb = build_operator(PolynomialSymbol.p(), HilbertSpec.fock(dim + 4), hbar)
    ref = ((Qb @ Pb + Pb @ Qb) / 2)[:dim, :dim]
    W = build_operator(PolynomialSymbol({(1, 1): 1}), HilbertSpec.fock(dim), hbar)
    assert np.allclose(W, ref, atol=1e-12)


def test_canonical_commutator():
    dim, hbar = 30, 0.5
    Q = build_operator(PolynomialSymbol.q(), HilbertSpec.fock(dim), hbar)
    P = build_operator(PolynomialSymbol.p(), HilbertSpec.fock(dim), hbar)
    C = (Q @ P - P @ Q)[:-1, :-1]
    assert np.allclose(C, 1j * hbar * np.eye(dim - 1), atol=1e-12)


def test_truncation_error():
    with pytest.raises(TruncationError):
        build_operator(PolynomialSymbol.quartic(0.2), HilbertSpec.fock(4))
    with pytest.raises(UnsupportedBoundary):
        build_operator(PolynomialSymbol.q(), HilbertSpec.qubit())


real_coeffs = st.integers(-30, 30).map(lambda c: c / 10)
real_symbols = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), real_coeffs,
                               min_size=1, max_size=5).map(PolynomialSymbol)


@settings(max_examples=100, deadline=None)
@given(real_symbols)
def test_real_symbols_are_hermitian(s):
    assert is_hermitian(build_operator(s, HilbertSpec.fock(14), 1.0))


# # States and propagation

def test_spin_states():
    assert np.allclose(spin_state(SpinLabel(0, 0)), [1, 0])
    a = 0.3
    assert np.allclose(spin_state(SpinLabel(2 * a, 0)), [math.cos(a), math.sin(a)])


def test_vacuum_state():
    v = state_vector(CoherentLabel(0, 0), HilbertSpec.fock(16), 1.0)
    assert np.allclose(v, np.eye(16)[0])


def test_coherent_state_moments():
    hbar = 0.5
    dim = fock_dim_for([CoherentLabel(1.2, -0.4).alpha(hbar)])
    space = HilbertSpec.fock(dim)
    v = state_vector(CoherentLabel(1.2, -0.4), space, hbar)
    Q = build_operator(PolynomialSymbol.q(), space, hbar)
    P = build_operator(PolynomialSymbol.p(), space, hbar)
    assert abs(np.vdot(v, v) - 1) < 1e-14
    assert abs(np.vdot(v, Q @ v) - 1.2) < 1e-12
    assert abs(np.vdot(v, P @ v) + 0.4) < 1e-12


def test_tail_error_and_position_rejected():
    with pytest.raises(TailError):
        coherent_state(3.0, 6)
    with pytest.raises(UnsupportedBoundary):
        state_vector(0.5, HilbertSpec.fock(10))
    sc = Scenario(PositionBoundary(0.0, 1.0), PolynomialSymbol.harmonic(), 1.0, 0.0, 1.0)
    with pytest.raises(UnsupportedBoundary):
        hilbert_space(sc)


def test_propagate_examples():
    assert np.allclose(propagate(SIGMA_Z, 0.0), np.eye(2))
    assert np.allclose(propagate(np.zeros((3, 3)), 2.5), np.eye(3))
    U = propagate(SIGMA_Z, math.pi / 2)
    assert np.allclose(U, np.diag([cmath.exp(-0.5j * math.pi), cmath.exp(0.5j * math.pi)]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 5))
def test_propagate_unitary_and_matches_expm(seed, dt):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    H = (X + X.conj().T) / 2
    U = propagate(H, dt, 0.8)
    assert np.max(np.abs(U.conj().T @ U - np.eye(6))) < 1e-12
    assert np.allclose(U, expm(-1j * H * dt / 0.8), atol=1e-11)


# # Weak values

def test_identity_weak_value():
    sc = harmonic_scenario()
    space = hilbert_space(sc)
    w = weak_value_exact(sc, np.eye(space.dim), 0.4, space)
    assert w.value == pytest.approx(1, abs=1e-13)
    assert w.diagnostics["overlap_abs"] > 0


def test_spin_sigma_z_example():
    sc = spin_scenario()
    w = weak_value_exact(sc, SIGMA_Z, 0.5)
    assert abs(w.value - (2 + SQ3)) < 1e-12


def test_h0_coherent_example():
    sc = coherent_h0_scenario()
    space = HilbertSpec.fock(24)
    for sym in (PolynomialSymbol.q(), PolynomialSymbol.p()):
        A = build_operator(sym, space, 1.0)
        for t in (0.2, 0.5, 0.8):
            assert abs(weak_value_exact(sc, A, t, space).value - (0.5 - 0.5j)) < 1e-10


def test_h0_closed_form_any_hbar():
    for hbar in (1.0, 0.5, 0.25):
        sc = Scenario(CoherentBoundary(CoherentLabel(0.3, -1.1), CoherentLabel(-0.7, 0.4)),
                      PolynomialSymbol(), hbar, 0.0, 1.0)
        space = hilbert_space(sc)
        w = weak_value_exact(sc, build_operator(PolynomialSymbol.q(), space, hbar), 0.5, space)
        assert abs(w.value - (0.5 * (-0.7 + 0.3) - 0.5j * (0.4 + 1.1))) < 1e-10


def test_time_outside_window():
    with pytest.raises(ValidationError):
        weak_value_exact(spin_scenario(), SIGMA_Z, 1.5)


def test_orthogonal_postselection():
    sc = Scenario(SpinBoundary(SpinLabel(0.0, 0.0), SpinLabel(0.0, 0.0)), "zero", 1.0, 0.0, 1.0)
    ket, bra = two_state_vectors(sc, 0.5)
    # the south pole is outside the label chart, so postselect on |down> directly
    with pytest.raises(OrthogonalPostselection):
        _weak_ratio(np.array([0, 1], dtype=complex), SIGMA_Z, ket)


def test_weak_variance_examples():
    sc = spin_scenario()
    assert abs(weak_variance_exact(sc, np.eye(2), 0.5)) < 1e-14
    w = weak_value_exact(sc, SIGMA_Z, 0.5).value
    assert abs(weak_variance_exact(sc, SIGMA_Z, 0.5) - (1 - w * w)) < 1e-10


def test_h0_weak_variance_linear_in_hbar():
    vals = []
    for hbar in (1.0, 0.5, 0.25):
        sc = coherent_h0_scenario(hbar)
        space = hilbert_space(sc)
        A = build_operator(PolynomialSymbol.q(), space, hbar)
        vals.append(abs(weak_variance_exact(sc, A, 0.5, space)))
    for v, hbar in zip(vals, (1.0, 0.5, 0.25)):
        assert v / hbar == pytest.approx(vals[0], rel=0.2)


# # Invariants

def _random_spin_labels(seed):
    rng = np.random.default_rng(seed)
    return (SpinLabel(rng.uniform(0, 3.0), rng.uniform(0, 2 * math.pi)),
            SpinLabel(rng.uniform(0, 3.0), rng.uniform(0, 2 * math.pi)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_pauli_sum_of_squares(seed):
    pre, post = _random_spin_labels(seed)
    if abs(np.vdot(spin_state(post), spin_state(pre))) < 1e-3:
        return
    wx, wy, wz = spin_weak_values_exact(pre, post)
    assert abs(wx**2 + wy**2 + wz**2 - 1) < 1e-10 * max(1, abs(wx)**2 + abs(wy)**2 + abs(wz)**2)


def test_swap_identity_behind_sum_of_squares():
    swap = np.eye(4)[[0, 2, 1, 3]]
    total = sum(np.kron(s, s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z))
    assert np.allclose(total, 2 * swap - np.eye(4))


def _random_coherent(seed, H):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1.5, 1.5, 2), rng.uniform(-1.5, 1.5, 2)
    return Scenario(CoherentBoundary(CoherentLabel(*a), CoherentLabel(*b)), H, 1.0, 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
def test_linearity_and_normalization(seed, a, b):
    sc = _random_coherent(seed, PolynomialSymbol.harmonic())
    space = hilbert_space(sc)
    H = hamiltonian_matrix(sc, space)
    A = build_operator(PolynomialSymbol.q(), space)
    B = build_operator(PolynomialSymbol({(0, 2): 1.0, (1, 0): -0.5}), space)
    t = 0.37
    wA = weak_value_exact(sc, A, t, space, H).value
    wB = weak_value_exact(sc, B, t, space, H).value
    wAB = weak_value_exact(sc, a * A + b * B, t, space, H).value
    assert abs(wAB - (a * wA + b * wB)) <= 1e-12 * max(1, abs(a * wA) + abs(b * wB))
    assert abs(weak_value_exact(sc, np.eye(space.dim), t, space, H).value - 1) < 1e-13


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_preselection_only_reduction(seed):
    # post = U pre, realised by choosing post labels on the harmonic orbit of pre
    rng = np.random.default_rng(seed)
    q, p = rng.uniform(-1.5, 1.5, 2)
    tau = rng.uniform(0.1, 2.0)
    post = CoherentLabel(q * math.cos(tau) + p * math.sin(tau), -q * math.sin(tau) + p * math.cos(tau))
    sc = Scenario(CoherentBoundary(CoherentLabel(q, p), post), PolynomialSymbol.harmonic(),
                  1.0, 0.0, tau)
    space = hilbert_space(sc)
    A = build_operator(PolynomialSymbol.q(), space)
    t = tau * 0.4
    w = weak_value_exact(sc, A, t, space).value
    ket, _ = two_state_vectors(sc, t, space)
    assert abs(w - np.vdot(ket, A @ ket)) < 1e-10
    assert abs(w.imag) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_h0_time_constancy(seed):
    sc = _random_coherent(seed, PolynomialSymbol())
    space = hilbert_space(sc)
    A = build_operator(PolynomialSymbol({(2, 0): 1.0, (1, 1): 0.3}), space)
    vals = [weak_value_exact(sc, A, t, space).value for t in np.linspace(0, 1, 5)]
    assert max(abs(v - vals[0]) for v in vals) < 1e-12 * max(1, abs(vals[0]))


# # Generating functional

def test_source_profile_validation():
    with pytest.raises(ValidationError):
        SourceProfile([(0.0, 0.5, 1.0), (0.4, 0.8, 1.0)])
    with pytest.raises(AlignmentError):
        generating_functional(spin_scenario(), SIGMA_Z, SourceProfile([(0.0, 0.013, 1.0)]),
                              n_steps=64)


def test_gf_empty_source_is_overlap():
    sc = spin_scenario()
    z = generating_functional(sc, SIGMA_Z, SourceProfile([]))
    assert abs(z - np.vdot(spin_state(sc.boundary.post), spin_state(sc.boundary.pre))) < 1e-14
    sc = harmonic_scenario()
    space = hilbert_space(sc)
    ket, bra = two_state_vectors(sc, 0.0, space)
    assert abs(generating_functional(sc, np.eye(space.dim), SourceProfile([]), space)
               - np.vdot(bra, ket)) < 1e-12


def test_gf_single_bin_spin_closed_form():
    sc = spin_scenario()
    z0, a = 0.3, math.pi / 6
    z = generating_functional(sc, SIGMA_Z, SourceProfile([(0.0, 1.0, z0)]))
    ref = (math.cos(a) * cmath.exp(1j * z0) - math.sin(a) * cmath.exp(-1j * z0)) / math.sqrt(2)
    assert abs(z - ref) < 1e-14


def test_gf_identity_observable():
    sc = harmonic_scenario()
    space = hilbert_space(sc)
    for eps in (1e-5, 1e-2, 0.3):
        w = weak_value_via_gf(sc, np.eye(space.dim), 0.5, space, epsilon=eps)
        assert abs(w.value - 1) < 1e-8


def test_gf_matches_exact_spin():
    sc = spin_scenario()
    w = weak_value_via_gf(sc, SIGMA_Z, 0.5, epsilon=1e-5, bin_width=1 / 64)
    assert abs(w.value - (2 + SQ3)) < 1e-4


def test_gf_bin_must_fit():
    with pytest.raises(ValidationError):
        weak_value_via_gf(spin_scenario(), SIGMA_Z, 0.001, bin_width=1 / 64)


# # Spin

def test_spin_paper_values():
    b = spin_scenario().boundary
    wx, wy, wz = spin_weak_values_exact(b.pre, b.post)
    assert abs(wx + 1) < 1e-12
    assert abs(wy + 1j * (2 + SQ3)) < 1e-12
    assert abs(wz - (2 + SQ3)) < 1e-12


def test_spin_preselection_only():
    lab = SpinLabel(1.1, 0.4)
    w = spin_weak_values_exact(lab, lab)
    ref = (math.sin(1.1) * math.cos(0.4), math.sin(1.1) * math.sin(0.4), math.cos(1.1))
    assert np.allclose(w, ref, atol=1e-14)


def test_spin_anomalous_tan_identity():
    a = math.pi / 4 - 0.005
    b = spin_scenario(a).boundary
    wz = spin_weak_values_exact(b.pre, b.post)[2]
    assert abs(wz - math.tan(math.pi / 4 + a)) < 1e-9 * abs(wz)
    assert abs(wz) >= 100


def test_spin_with_hamiltonian():
    # H = sigma_z rotates phi; compare with explicit matrices
    pre, post = SpinLabel(0.7, 0.2), SpinLabel(1.9, 2.0)
    w = spin_weak_values_exact(pre, post, H_spin=SIGMA_Z, t=0.3, t_start=0.0, t_end=1.0)
    U1, U2 = propagate(SIGMA_Z, 0.3), propagate(SIGMA_Z, 0.7)
    ket, bra = U1 @ spin_state(pre), U2.conj().T @ spin_state(post)
    for k, s in enumerate("xyz"):
        assert abs(w[k] - np.vdot(bra, PAULI[s] @ ket) / np.vdot(bra, ket)) < 1e-12
