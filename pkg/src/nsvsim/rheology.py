"""Constitutive operators of the power-law model and their monotonicity checks.

The stress is ``|D|^(p-2) D`` with the Frobenius modulus; the damping term is
``|u|^(q-2) u``.  Both extend continuously by zero where the modulus vanishes,
which is the only sensible convention for p < 2 (the operators appear only
inside integrals and are never differentiated by the time stepper, so no
epsilon-regularization is added).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError
from .fields import SymTensorField


@dataclass(frozen=True)
class RheologyParams:
    """Constitutive constants: power-law index p, damping exponent q,
    viscosity nu, relaxation coefficient kappa, damping weight alpha."""

    p: float
    q: float
    nu: float
    kappa: float
    alpha: float = 0.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ConfigurationError(
                f"power-law index p={self.p} must satisfy p > 1 (= 2d/(d+2) in 2D)"
            )
        if self.nu < 0:
            raise ConfigurationError(f"viscosity nu={self.nu} must be nonnegative")
        if self.kappa <= 0:
            raise ConfigurationError(f"relaxation coefficient kappa={self.kappa} must be positive")
        if self.alpha < 0:
            raise ConfigurationError(f"damping weight alpha={self.alpha} must be nonnegative")
        if self.alpha > 0 and self.q < self.q_floor:
            raise ConfigurationError(
                f"damping exponent q={self.q} < max(2p', 3) = {self.q_floor} "
                f"required when alpha > 0 (p' = {self.p_conj:.6g})"
            )
        if not self.q > 1.0:
            raise ConfigurationError(f"damping exponent q={self.q} must exceed 1")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_floor(self) -> float:
        """Smallest admissible q for an active damping term."""
        return max(2.0 * self.p_conj, 3.0)


def _power_modulus(mod: np.ndarray, expo: float) -> np.ndarray:
    """|.|^expo with the zero convention at mod == 0 for negative exponents."""
    if expo >= 0:
        return mod**expo
    out = np.zeros_like(mod)
    nz = mod > 0
    out[nz] = mod[nz] ** expo
    return out


def power_law_stress(D: SymTensorField, params: RheologyParams) -> SymTensorField:
    """Pointwise stress A = |D|^(p-2) D; A = 0 wherever |D| = 0."""
    w = _power_modulus(D.modulus(), params.p - 2.0)
    return D.scaled(w)


def stabilizer(u: np.ndarray, params: RheologyParams) -> np.ndarray:
    """Pointwise damping alpha |u|^(q-2) u on grid samples of shape (2, N, N)."""
    speed = np.sqrt(np.sum(np.asarray(u, dtype=float) ** 2, axis=0))
    w = _power_modulus(speed, params.q - 2.0)
    return params.alpha * w[None, :, :] * u


@dataclass(frozen=True)
class MonotonicityReport:
    """One evaluation of the shear-rate inequality pair for a tensor pair."""

    lhs: float
    rhs: float
    product: float  # (|M|^(p-2)M - |N|^(p-2)N) : (M - N)
    holds: bool


def _as_sym(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
    if m[0, 1] != m[1, 0]:
        raise ValidationError("matrix is not symmetric")
    return m


def monotonicity_gap(M, N, p: float, tol: float = 1e-12) -> MonotonicityReport:
    """Evaluate the p-regime monotonicity inequality for a symmetric pair.

    For p >= 2:      2^(1-p) |M-N|^p  <=  (A(M) - A(N)) : (M - N)
    For 1 < p < 2:   (p-1) |M-N|^2    <=  (A(M) - A(N)) : (M - N) * (|M|^p + |N|^p)^((2-p)/p)

    where A(T) = |T|^(p-2) T.  Reports rhs >= lhs - tol * scale and the plain
    monotonicity product.
    """
    if not 1.0 < p < np.inf:
        raise ValidationError(f"p={p} outside (1, inf)")
    m, n = _as_sym(M), _as_sym(N)

    def mod(t):
        return float(np.sqrt(np.sum(t * t)))

    def stress(t):
        mt = mod(t)
        return np.zeros_like(t) if mt == 0.0 else mt ** (p - 2.0) * t

    diff = m - n
    product = float(np.sum((stress(m) - stress(n)) * diff))
    if p >= 2.0:
        lhs = 2.0 ** (1.0 - p) * mod(diff) ** p
        rhs = product
    else:
        lhs = (p - 1.0) * mod(diff) ** 2
        rhs = product * (mod(m) ** p + mod(n) ** p) ** ((2.0 - p) / p)
    scale = max(1.0, mod(m), mod(n)) ** p
    return MonotonicityReport(lhs=lhs, rhs=rhs, product=product, holds=rhs >= lhs - tol * scale)


def monotonicity_sweep(
    p: float, samples: int, seed: int = 0, entry_range: float = 5.0
) -> tuple[int, float]:
    """Brute-force sweep over random symmetric pairs; returns (violations, worst margin).

    Margin is min(rhs - lhs + tol * scale); nonnegative means zero violations.
    The plain monotonicity product is checked for nonnegativity as well.
    """
    rng = np.random.default_rng(seed)
    violations = 0
    worst = np.inf
    for _ in range(samples):
        a = rng.uniform(-entry_range, entry_range, size=(2, 2))
        b = rng.uniform(-entry_range, entry_range, size=(2, 2))
        a = 0.5 * (a + a.T)
        b = 0.5 * (b + b.T)
        rep = monotonicity_gap(a, b, p)
        scale = max(1.0, np.sqrt(np.sum(a * a)), np.sqrt(np.sum(b * b))) ** p
        margin = (rep.rhs - rep.lhs) / scale
        worst = min(worst, margin)
        if not rep.holds or rep.product < -1e-12 * scale:
            violations += 1
    return violations, float(worst)
