"""Finite-dimensional stochastic Galerkin system on the divergence-free
Fourier basis, advanced by semi-implicit Euler-Maruyama.

The basis is L2-orthonormal and diagonalizes the Voigt mass operator, so the
mass solve is an exact per-mode division by ``1 + kappa |k|^2``.  Drift terms
are evaluated pseudo-spectrally on the dealiased grid and projected back onto
the first ``n`` modes; the grid is required to satisfy ``N > 3 K`` so that
quadratic products are alias-free in the retained band, which is what makes
the discrete energy identities of the audits exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import fields
from .errors import ConfigurationError, DivergenceError, ValidationError
from .fields import SpectralField, from_grid, mode_table, quad_weight, to_grid
from .noise import NoiseModel, sample_increment
from .rheology import RheologyParams, power_law_stress, stabilizer

_COS, _SIN, _MEAN = 0, 1, 2
_AMP = 1.0 / (np.pi * np.sqrt(2.0))  # L2-normalization of cos/sin basis fields
_MEAN_AMP = 1.0 / (2.0 * np.pi)


class DivFreeBasis:
    """First ``n`` real divergence-free Fourier basis fields on the torus.

    Per nonzero representative wavevector (half-space convention) there are a
    cosine and a sine field polarized along ``k_perp / |k|``; the two constant
    mean-flow fields come first when retained.  Entries are ordered by
    ``(|k|^2, k_x, k_y, phase)`` so that truncation to the first n modes is
    reproducible.
    """

    def __init__(self, n_modes: int, grid_size: int, include_mean: bool = True):
        if n_modes < 1:
            raise ConfigurationError("need at least one basis mode")
        k_limit = (grid_size - 1) // 3
        if k_limit < 1:
            raise ConfigurationError(f"grid_size={grid_size} leaves no alias-free band")
        entries: list[tuple[int, int, int]] = []
        if include_mean:
            entries.append((0, 0, _MEAN))
            entries.append((0, 0, _MEAN + 1))
        for kx, ky in mode_table(k_limit):
            if kx > 0 or (kx == 0 and ky > 0):
                entries.append((kx, ky, _COS))
                entries.append((kx, ky, _SIN))
            if len(entries) >= n_modes + 1:
                break
        if len(entries) < n_modes:
            raise ConfigurationError(
                f"grid_size={grid_size} supports only {len(entries)} basis modes, "
                f"requested {n_modes}"
            )
        entries = entries[:n_modes]

        self.n = n_modes
        self.grid_size = grid_size
        self.include_mean = include_mean
        self.kx = np.array([e[0] for e in entries], dtype=int)
        self.ky = np.array([e[1] for e in entries], dtype=int)
        self.phase = np.array([min(e[2], _MEAN) for e in entries], dtype=int)
        self.k2 = (self.kx**2 + self.ky**2).astype(float)
        self.k_max = int(max(1, np.max(np.abs(self.kx)), np.max(np.abs(self.ky))))
        if grid_size <= 3 * self.k_max:
            raise ConfigurationError(
                f"grid_size={grid_size} must exceed 3*k_max={3 * self.k_max} for the retained modes"
            )

        # Polarization k_perp/|k| for wave modes, coordinate unit vectors for means.
        pol = np.zeros((n_modes, 2))
        wave = self.k2 > 0
        kn = np.sqrt(np.where(wave, self.k2, 1.0))
        pol[:, 0] = np.where(wave, -self.ky / kn, 0.0)
        pol[:, 1] = np.where(wave, self.kx / kn, 0.0)
        mean_rows = np.flatnonzero(~wave)
        for comp, row in enumerate(mean_rows):
            pol[row, comp] = 1.0
        self.pol = pol

        # Scatter weights for the +k and -k coefficient images.
        w_plus = np.where(
            self.phase == _COS, 0.5 * _AMP + 0j,
            np.where(self.phase == _SIN, -0.5j * _AMP, _MEAN_AMP + 0j),
        )
        self._w_plus = w_plus
        self._w_minus = np.where(self.phase == _MEAN, 0.0, np.conj(w_plus))
        k = self.k_max
        self._rows_p = self.kx + k
        self._cols_p = self.ky + k
        self._rows_m = k - self.kx
        self._cols_m = k - self.ky

    def mass_multipliers(self, kappa: float) -> np.ndarray:
        return 1.0 + kappa * self.k2

    def scatter(self, c: np.ndarray) -> SpectralField:
        """Coefficient vector -> spectral field (u = sum_j c_j psi_j)."""
        c = np.asarray(c, dtype=float)
        k = self.k_max
        coeffs = np.zeros((2, 2 * k + 1, 2 * k + 1), dtype=complex)
        for comp in range(2):
            vp = c * self._w_plus * self.pol[:, comp]
            vm = c * self._w_minus * self.pol[:, comp]
            np.add.at(coeffs[comp], (self._rows_p, self._cols_p), vp)
            np.add.at(coeffs[comp], (self._rows_m, self._cols_m), vm)
        return SpectralField(coeffs, self.grid_size, divfree=True)

    def gather(self, f: SpectralField) -> np.ndarray:
        """L2 pairings (f, psi_j); the orthogonal projection onto the span."""
        off = f.k_max - self.k_max
        if off < 0:
            raise ValidationError("field truncation too small for this basis")
        vals = f.coeffs[:, self._rows_p + off, self._cols_p + off]
        z = self.pol[:, 0] * vals[0] + self.pol[:, 1] * vals[1]
        amp = 2.0 * np.sqrt(2.0) * np.pi
        return np.where(
            self.phase == _COS, amp * z.real,
            np.where(self.phase == _SIN, -amp * z.imag, 2.0 * np.pi * z.real),
        )

    def gather_grid(self, v: np.ndarray) -> np.ndarray:
        return self.gather(from_grid(v, self.k_max))

    def field_norms_sq(self, c: np.ndarray) -> tuple[float, float]:
        """(||u||_2^2, ||grad u||_2^2) in coefficient space."""
        c = np.asarray(c, dtype=float)
        return float(np.sum(c * c)), float(np.sum(self.k2 * c * c))

    def energy(self, c: np.ndarray, kappa: float) -> float:
        """||u||_2^2 + kappa ||grad u||_2^2."""
        l2, g2 = self.field_norms_sq(c)
        return l2 + kappa * g2


@dataclass(frozen=True)
class MassOperator:
    """Diagonal realization of I - kappa*Laplacian on the basis: m(k) = 1 + kappa |k|^2."""

    multipliers: np.ndarray

    @classmethod
    def build(cls, basis: DivFreeBasis, kappa: float) -> "MassOperator":
        return cls(basis.mass_multipliers(kappa))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.multipliers * x

    def solve(self, x: np.ndarray) -> np.ndarray:
        return x / self.multipliers


@dataclass
class StoppingMonitor:
    """First time ||grad u(t)||_2 reaches the threshold."""

    threshold: float
    tripped_at: float | None = None

    def check(self, grad_norm: float, t: float) -> bool:
        if self.tripped_at is None and self.threshold > 0 and grad_norm >= self.threshold:
            self.tripped_at = t
        return self.tripped_at is not None


def _spectral_div_tensor(txx, txy, tyy, k_max: int, grid_size: int) -> SpectralField:
    """Divergence of a symmetric grid tensor, truncated to |k_i| <= k_max."""
    cxx = fields.scalar_from_grid(txx, k_max)
    cxy = fields.scalar_from_grid(txy, k_max)
    cyy = fields.scalar_from_grid(tyy, k_max)
    kx, ky = fields.wavenumbers(k_max)
    v0 = 1j * (kx * cxx + ky * cxy)
    v1 = 1j * (kx * cxy + ky * cyy)
    return SpectralField(np.stack([v0, v1]), grid_size)


@dataclass
class DriftTerms:
    """Drift coefficient vector plus the grid-quadrature functionals that the
    energy ledger reuses (evaluated at the same state, same quadrature)."""

    b: np.ndarray
    dissipation_p: float  # ||D(u)||_p^p by grid quadrature
    damping_q: float      # ||u||_q^q by grid quadrature
    u_grid: np.ndarray


def assemble_drift_terms(
    basis: DivFreeBasis,
    u: SpectralField,
    f_coeffs: np.ndarray,
    params: RheologyParams,
    convection: bool = True,
) -> DriftTerms:
    n_grid = basis.grid_size
    w = quad_weight(n_grid)
    u_grid = to_grid(u)
    b = np.asarray(f_coeffs, dtype=float).copy()

    if convection:
        div_t = _spectral_div_tensor(
            u_grid[0] * u_grid[0], u_grid[0] * u_grid[1], u_grid[1] * u_grid[1],
            basis.k_max, n_grid,
        )
        b -= basis.gather(div_t)

    d = fields.sym_gradient(u)
    a_tensor = power_law_stress(d, params)
    div_a = _spectral_div_tensor(a_tensor.xx, a_tensor.xy, a_tensor.yy, basis.k_max, n_grid)
    b += params.nu * basis.gather(div_a)
    dissipation_p = float(np.sum(d.modulus() ** params.p) * w)

    speed = np.sqrt(np.sum(u_grid**2, axis=0))
    damping_q = float(np.sum(speed**params.q) * w)
    if params.alpha > 0:
        b -= basis.gather_grid(stabilizer(u_grid, params))

    return DriftTerms(b=b, dissipation_p=dissipation_p, damping_q=damping_q, u_grid=u_grid)


def assemble_drift(
    basis: DivFreeBasis,
    u: SpectralField,
    f: SpectralField | np.ndarray | None,
    params: RheologyParams,
    convection: bool = True,
) -> np.ndarray:
    """Galerkin drift vector b_j = (f,psi_j) + (u x u : grad psi_j)
    - nu (A(u) : D(psi_j)) - alpha (a(u), psi_j)."""
    if f is None:
        f_coeffs = np.zeros(basis.n)
    elif isinstance(f, SpectralField):
        f_coeffs = basis.gather(f)
    else:
        f_coeffs = np.asarray(f, dtype=float)
    return assemble_drift_terms(basis, u, f_coeffs, params, convection).b


def noise_projection(basis: DivFreeBasis, u_grid: np.ndarray, model: NoiseModel) -> np.ndarray:
    """Coefficients s_j = (shape(u), psi_j); phi_k(u) projects to scale_k * s."""
    if not model.active:
        return np.zeros(basis.n)
    return basis.gather_grid(model.shape(u_grid))


@dataclass
class GalerkinState:
    """Time-stepper state: coefficient vector over the first n basis modes."""

    t: float
    c: np.ndarray
    basis: DivFreeBasis
    params: RheologyParams
    noise: NoiseModel
    dt: float
    forcing: np.ndarray          # (n,) static or (steps, n) per-step coefficients
    master_seed: int = 0
    path: int = 0
    step_index: int = 0
    convection: bool = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.basis.n,):
            raise ValidationError(f"coefficient vector has shape {self.c.shape}, expected ({self.basis.n},)")
        if self.dt <= 0:
            raise ValidationError(f"dt={self.dt} must be positive")

    def field(self) -> SpectralField:
        return self.basis.scatter(self.c)

    def forcing_at(self, step: int) -> np.ndarray:
        f = self.forcing
        return f if f.ndim == 1 else f[min(step, f.shape[0] - 1)]

    def grad_norm(self) -> float:
        return float(np.sqrt(self.basis.field_norms_sq(self.c)[1]))

    def energy(self) -> float:
        return self.basis.energy(self.c, self.params.kappa)


def step(state: GalerkinState) -> GalerkinState:
    """One semi-implicit Euler-Maruyama step: exact diagonal mass solve,
    explicit drift, explicit noise increment drawn from the seed lineage."""
    if state.noise.active:
        inc = sample_increment(
            state.master_seed, state.path, state.step_index, state.dt, state.noise.n_w
        )
        return _step_with_increment(state, inc.db)
    return _step_with_increment(state, np.zeros(state.noise.n_w))


@dataclass
class Trajectory:
    """A realized path: coefficients at every step plus the raw noise draws,
    enough to reproduce every ledger entry exactly."""

    times: np.ndarray        # (S+1,)
    coeffs: np.ndarray       # (S+1, n)
    increments: np.ndarray   # (S, n_w)
    basis: DivFreeBasis
    params: RheologyParams
    noise: NoiseModel
    dt: float
    forcing: np.ndarray
    tripped_at: float | None = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def field_at(self, i: int) -> SpectralField:
        return self.basis.scatter(self.coeffs[i])

    def forcing_at(self, step: int) -> np.ndarray:
        f = self.forcing
        return f if f.ndim == 1 else f[min(step, f.shape[0] - 1)]

    def energies(self) -> np.ndarray:
        kappa = self.params.kappa
        return np.sum((1.0 + kappa * self.basis.k2) * self.coeffs**2, axis=1)

    def grad_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.basis.k2 * self.coeffs**2, axis=1))


def run(
    state0: GalerkinState,
    T: float,
    monitor: StoppingMonitor | None = None,
    increments: np.ndarray | None = None,
) -> Trajectory:
    """Advance to min(T, trip time).  Deterministic given the seed lineage;
    pass ``increments`` to drive several runs with matched noise."""
    if T < 0:
        raise ValidationError(f"T={T} must be nonnegative")
    dt = state0.dt
    n_steps = int(round(T / dt)) if T > 0 else 0
    if abs(n_steps * dt - T) > 1e-12 * max(1.0, abs(T)):
        raise ValidationError(f"T={T} is not an integer number of steps of dt={dt}")
    if increments is not None and increments.shape[0] < n_steps:
        raise ValidationError("supplied increment array shorter than the run")

    state = state0
    times = [state.t]
    coeffs = [state.c.copy()]
    incs = []
    tripped_at = None

    speed0 = float(np.max(np.sqrt(np.sum(to_grid(state0.field()) ** 2, axis=0))))
    cfl = dt * speed0 * state0.basis.k_max
    if cfl > 0.5:
        warnings.warn(
            f"dt*max|u|*k_max = {cfl:.3g} > 0.5: explicit convection may be unstable",
            stacklevel=2,
        )

    for i in range(n_steps):
        if monitor is not None and monitor.check(state.grad_norm(), state.t):
            tripped_at = monitor.tripped_at
            break
        if increments is not None:
            db = np.asarray(increments[i, : state.noise.n_w], dtype=float)
        elif state.noise.active:
            db = sample_increment(
                state.master_seed, state.path, state.step_index, dt, state.noise.n_w
            ).db
        else:
            db = np.zeros(state.noise.n_w)
        state = _step_with_increment(state, db)
        incs.append(db.copy())
        times.append(state.t)
        coeffs.append(state.c.copy())
    else:
        if monitor is not None and monitor.check(state.grad_norm(), state.t):
            tripped_at = monitor.tripped_at

    n_w = state0.noise.n_w
    return Trajectory(
        times=np.asarray(times),
        coeffs=np.asarray(coeffs),
        increments=np.asarray(incs).reshape(len(incs), n_w),
        basis=state0.basis,
        params=state0.params,
        noise=state0.noise,
        dt=dt,
        forcing=state0.forcing,
        tripped_at=tripped_at,
    )


def _step_with_increment(state: GalerkinState, db: np.ndarray) -> GalerkinState:
    """Deterministic step given the raw Gaussian increments of this step."""
    basis = state.basis
    mass = basis.mass_multipliers(state.params.kappa)
    terms = assemble_drift_terms(
        basis, state.field(), state.forcing_at(state.step_index), state.params,
        convection=state.convection,
    )
    rhs = terms.b * state.dt
    if state.noise.active:
        eta = float(np.dot(state.noise.mode_scales(), db))
        rhs = rhs + noise_projection(basis, terms.u_grid, state.noise) * eta
    c_new = state.c + rhs / mass
    if not np.all(np.isfinite(c_new)):
        raise DivergenceError(state.step_index)
    return replace(state, t=state.t + state.dt, c=c_new, step_index=state.step_index + 1)


def trajectory_csv(path, traj: Trajectory) -> None:
    """Per-state CSV: t, l2, grad_l2, lp_gradp, lq_q, energy, dissipation_acc,
    noise_trace_acc, tripped.  Floats carry 17 significant digits."""
    from .analysis import ledger_from_trajectory  # local import to keep layering one-way

    ledger = ledger_from_trajectory(traj)
    p, q = traj.params.p, traj.params.q
    w = quad_weight(traj.basis.grid_size)
    rows = []
    diss_acc = 0.0
    trace_acc = 0.0
    for i in range(len(traj.times)):
        f = traj.field_at(i)
        jac = fields.gradient(f)
        jac_mod = np.sqrt(np.sum(jac**2, axis=(0, 1)))
        g = to_grid(f)
        speed = np.sqrt(np.sum(g**2, axis=0))
        l2, g2 = traj.basis.field_norms_sq(traj.coeffs[i])
        tripped = int(traj.tripped_at is not None and traj.times[i] >= traj.tripped_at)
        rows.append(
            (
                traj.times[i], np.sqrt(l2), np.sqrt(g2),
                float(np.sum(jac_mod**p) * w), float(np.sum(speed**q) * w),
                l2 + traj.params.kappa * g2, diss_acc, trace_acc, tripped,
            )
        )
        if i < traj.n_steps:
            diss_acc += ledger.dissipation[i]
            trace_acc += ledger.ito_trace[i]
    with open(path, "w", newline="") as fh:
        fh.write("t,l2,grad_l2,lp_gradp,lq_q,energy,dissipation_acc,noise_trace_acc,tripped\n")
        for r in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in r) + "\n")
