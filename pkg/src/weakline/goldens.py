"""Reference scenarios reused by the CLI, the tests and the acceptance suite."""
import math

from .core import (CoherentBoundary, CoherentLabel, PolynomialSymbol, Scenario,
                   SpinBoundary, SpinLabel)

QUARTIC_LAMBDA = 0.2


def spin_scenario(alpha: float = math.pi / 6) -> Scenario:
    """Preselect (2 alpha, 0), postselect (pi/2, pi), vanishing Hamiltonian."""
    return Scenario(SpinBoundary(SpinLabel(2 * alpha, 0.0), SpinLabel(math.pi / 2, math.pi)),
                    "zero", 1.0, 0.0, 1.0)


def coherent_h0_scenario(hbar: float = 1.0) -> Scenario:
    """(q', p') = (1, 0) to (q'', p'') = (0, 1) with H = 0."""
    return Scenario(CoherentBoundary(CoherentLabel(1.0, 0.0), CoherentLabel(0.0, 1.0)),
                    PolynomialSymbol(), hbar, 0.0, 1.0)


def harmonic_scenario(hbar: float = 1.0) -> Scenario:
    return Scenario(CoherentBoundary(CoherentLabel(1.0, 0.0), CoherentLabel(0.0, 1.0)),
                    PolynomialSymbol.harmonic(), hbar, 0.0, 1.0)


def quartic_scenario(hbar: float = 1.0, t_end: float = 1.0) -> Scenario:
    """H = (q^2 + p^2)/2 + 0.2 q^4 between the same labels as the H = 0 case."""
    return Scenario(CoherentBoundary(CoherentLabel(1.0, 0.0), CoherentLabel(0.0, 1.0)),
                    PolynomialSymbol.quartic(QUARTIC_LAMBDA), hbar, 0.0, t_end)


def quartic_caustic_scenario(t_end: float, hbar: float = 1.0) -> Scenario:
    """Quartic H between mirror labels (2, 0) and (-2, 0); the Klauder root meets a caustic."""
    return Scenario(CoherentBoundary(CoherentLabel(2.0, 0.0), CoherentLabel(-2.0, 0.0)),
                    PolynomialSymbol.quartic(QUARTIC_LAMBDA), hbar, 0.0, t_end)
