"""Configuration, experiment orchestration, and output emission.

Config files are flat ``key = value`` text with dotted sections.  Every
experiment writes a deterministic ``report.json`` (sorted keys, no volatile
fields) plus its CSV/snapshot artifacts; the exit code is 0 iff every
criterion in the report passed.  Wall-clock timing goes to stdout only, so
equal config and seed reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__, analysis, fields, pressure, solvability
from .errors import ConfigurationError, ValidationError
from .galerkin import (
    DivFreeBasis,
    GalerkinState,
    StoppingMonitor,
    Trajectory,
    run,
    trajectory_csv,
)
from .noise import NoiseModel, verify_noise_conditions
from .rheology import RheologyParams, monotonicity_sweep

EXPERIMENTS = (
    "simulate",
    "energy-audit",
    "moments",
    "uniqueness",
    "alpha-sweep",
    "pressure",
    "propcheck",
    "bogovskii",
)

IC_KINDS = ("zero", "shear", "taylor_green", "random")
FORCING_KINDS = ("zero", "file", "files")


@dataclass
class SimConfig:
    p: float = 2.0
    q: float = 3.0
    nu: float = 0.5
    kappa: float = 0.5
    alpha: float = 0.0
    n_modes: int = 32
    grid_n: int = 32
    steps: int = 200
    dt: float = 0.0025
    T: float = 0.5
    seed: int = 12345
    paths: int = 1
    gamma: float = 2.0
    noise_family: str = "off"
    noise_amplitude: float = 0.0
    noise_modes: int = 8
    ic_kind: str = "shear"
    ic_energy: float = 1.0
    forcing_kind: str = "zero"
    forcing_path: str = ""
    experiment: str = "simulate"
    pin_mean: bool = False
    convection: bool = True
    monitor_threshold: float = 0.0

    def validate(self) -> None:
        # RheologyParams carries the constitutive invariants and their messages.
        RheologyParams(p=self.p, q=self.q, nu=self.nu, kappa=self.kappa, alpha=self.alpha)
        if self.gamma < 2.0:
            raise ConfigurationError(f"gamma={self.gamma} must be >= 2 in 2D")
        if abs(self.steps * self.dt - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ConfigurationError(
                f"steps*dt = {self.steps * self.dt!r} must equal T = {self.T!r} to 1e-12"
            )
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.ic_kind not in IC_KINDS:
            raise ConfigurationError(f"unknown ic.kind {self.ic_kind!r}; choose from {IC_KINDS}")
        if self.forcing_kind not in FORCING_KINDS:
            raise ConfigurationError(
                f"unknown forcing.kind {self.forcing_kind!r}; choose from {FORCING_KINDS}"
            )
        if self.paths < 1:
            raise ConfigurationError("paths must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigurationError("seed must fit in u64")
        NoiseModel(self.noise_family, self.noise_amplitude, self.noise_modes)

    def rheology(self) -> RheologyParams:
        return RheologyParams(p=self.p, q=self.q, nu=self.nu, kappa=self.kappa, alpha=self.alpha)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise_family, self.noise_amplitude, self.noise_modes)

    def basis(self) -> DivFreeBasis:
        return DivFreeBasis(self.n_modes, self.grid_n, include_mean=not self.pin_mean)


_KEY_MAP = {
    "p": ("p", float),
    "q": ("q", float),
    "nu": ("nu", float),
    "kappa": ("kappa", float),
    "alpha": ("alpha", float),
    "n_modes": ("n_modes", int),
    "grid_n": ("grid_n", int),
    "steps": ("steps", int),
    "dt": ("dt", float),
    "T": ("T", float),
    "seed": ("seed", int),
    "paths": ("paths", int),
    "gamma": ("gamma", float),
    "noise.family": ("noise_family", str),
    "noise.amplitude": ("noise_amplitude", float),
    "noise.modes": ("noise_modes", int),
    "ic.kind": ("ic_kind", str),
    "ic.energy": ("ic_energy", float),
    "forcing.kind": ("forcing_kind", str),
    "forcing.path": ("forcing_path", str),
    "experiment": ("experiment", str),
    "pin_mean": ("pin_mean", bool),
    "convection": ("convection", bool),
    "monitor.threshold": ("monitor_threshold", float),
}


def _coerce(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"expected a boolean, got {raw!r}")
    return typ(raw)


def parse_config(path: str | None = None, overrides: list[str] | None = None) -> SimConfig:
    """Build a validated SimConfig from a key=value file plus override pairs."""
    cfg = SimConfig()
    pairs: list[tuple[str, str]] = []
    if path is not None:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigurationError(f"{path}:{lineno}: expected key = value")
                key, val = stripped.split("=", 1)
                pairs.append((key.strip(), val))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must be key=value")
        key, val = item.split("=", 1)
        pairs.append((key.strip(), val))
    for key, val in pairs:
        if key not in _KEY_MAP:
            raise ConfigurationError(f"unknown config key {key!r}")
        attr, typ = _KEY_MAP[key]
        setattr(cfg, attr, _coerce(val, typ))
    cfg.validate()
    return cfg


def config_echo(cfg: SimConfig) -> dict:
    return {key: getattr(cfg, attr) for key, (attr, _) in _KEY_MAP.items()}


# ---------------------------------------------------------------------------
# Initial conditions and forcing

def initial_coefficients(cfg: SimConfig, basis: DivFreeBasis, path: int = 0) -> np.ndarray:
    kind = cfg.ic_kind
    if kind == "zero":
        return np.zeros(basis.n)
    n = basis.grid_size
    x = np.arange(n) * 2.0 * np.pi / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    if kind == "shear":
        c = basis.gather_grid(np.stack([np.sin(yy), np.zeros_like(yy)]))
    elif kind == "taylor_green":
        c = basis.gather_grid(np.stack([np.sin(xx) * np.cos(yy), -np.cos(xx) * np.sin(yy)]))
    else:
        # random: one draw per mode, keyed by the mode identity rather than its
        # position, so enlarging the span extends the same underlying field
        # instead of redrawing it (resolution studies rely on this)
        c = np.empty(basis.n)
        for j in range(basis.n):
            key = [cfg.seed, path, int(basis.kx[j]) + 2**20,
                   int(basis.ky[j]) + 2**20, int(basis.phase[j])]
            c[j] = np.random.default_rng(key).standard_normal()
        c *= (1.0 + basis.k2) ** -2.0
        c[basis.k2 == 0] = 0.0
    if cfg.ic_energy > 0:
        e = basis.energy(c, cfg.kappa)
        if e > 0:
            c = c * np.sqrt(cfg.ic_energy / e)
    return c


def forcing_coefficients(cfg: SimConfig, basis: DivFreeBasis) -> np.ndarray:
    if cfg.forcing_kind == "zero":
        return np.zeros(basis.n)
    if cfg.forcing_kind == "file":
        return basis.gather(fields.load_field(cfg.forcing_path))
    paths = sorted(glob.glob(cfg.forcing_path))
    if len(paths) < cfg.steps:
        raise ConfigurationError(
            f"forcing sequence has {len(paths)} snapshots, need {cfg.steps}"
        )
    return np.stack([basis.gather(fields.load_field(p)) for p in paths[: cfg.steps]])


def make_state(cfg: SimConfig, basis: DivFreeBasis, path: int = 0) -> GalerkinState:
    return GalerkinState(
        t=0.0,
        c=initial_coefficients(cfg, basis, path),
        basis=basis,
        params=cfg.rheology(),
        noise=cfg.noise_model(),
        dt=cfg.dt,
        forcing=forcing_coefficients(cfg, basis),
        master_seed=cfg.seed,
        path=path,
        convection=cfg.convection,
    )


def thread_count() -> int:
    raw = os.environ.get("NSV_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_paths(fn, M: int) -> list:
    """Evaluate fn(path_index) for all paths; reduction is ordered by index,
    so results do not depend on the thread schedule."""
    workers = thread_count()
    if workers <= 1 or M <= 1:
        return [fn(i) for i in range(M)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(M)))


# ---------------------------------------------------------------------------
# Experiments

@dataclass
class Criterion:
    name: str
    passed: bool
    details: str


@dataclass
class RunReport:
    config: dict
    criteria: list[Criterion]
    metrics: dict
    artifacts: list[str]
    versions: dict
    wall_clock: float = 0.0  # printed, never serialized

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "criteria": [asdict(c) for c in self.criteria],
            "metrics": self.metrics,
            "artifacts": self.artifacts,
            "versions": self.versions,
            "passed": self.passed,
        }
        return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _versions() -> dict:
    return {"nsvsim": __version__, "numpy": np.__version__}


def _experiment_simulate(cfg: SimConfig, out_dir: str):
    basis = cfg.basis()

    def one_path(i: int) -> Trajectory:
        monitor = StoppingMonitor(cfg.monitor_threshold) if cfg.monitor_threshold > 0 else None
        return run(make_state(cfg, basis, i), cfg.T, monitor=monitor)

    trajs = run_paths(one_path, cfg.paths)
    criteria = []
    artifacts = []
    final = trajs[0].field_at(trajs[0].n_steps)
    criteria.append(Criterion(
        "states finite", all(np.all(np.isfinite(t.coeffs)) for t in trajs), "no nonfinite coefficient"))
    criteria.append(Criterion(
        "reconstruction divergence-free", fields.divergence_error(final) < 1e-12,
        f"max |k.u(k)| relative = {fields.divergence_error(final):.3e}"))
    criteria.append(Criterion(
        "reconstruction real-valued", fields.hermitian_error(final) < 1e-12,
        f"hermitian defect = {fields.hermitian_error(final):.3e}"))
    ledger, summary = analysis.energy_audit(trajs[0])
    criteria.append(Criterion(
        "ledger bookkeeping exact", summary["bookkeeping_error"] == 0.0,
        f"recomputation defect = {summary['bookkeeping_error']:.3e}"))
    deterministic_decay = (
        not cfg.noise_model().active and cfg.forcing_kind == "zero" and cfg.nu > 0
    )
    if deterministic_decay:
        criteria.append(Criterion(
            "energy nonincreasing", bool(summary["energy_nonincreasing"]),
            "noise off, f = 0, nu > 0"))
    csv_path = os.path.join(out_dir, "trajectory.csv")
    trajectory_csv(csv_path, trajs[0])
    artifacts.append(csv_path)
    os.makedirs(os.path.join(out_dir, "fields"), exist_ok=True)
    snap = os.path.join(out_dir, "fields", "final_path0.bin")
    fields.save_field(snap, final)
    artifacts.append(snap)
    metrics = {
        "final_energy": float(trajs[0].energies()[-1]),
        "max_abs_residual": summary["max_abs_residual"],
        "tripped_at": trajs[0].tripped_at,
    }
    return criteria, metrics, artifacts


def _experiment_energy_audit(cfg: SimConfig, out_dir: str):
    basis = cfg.basis()
    criteria = []
    metrics = {}
    artifacts = []
    if cfg.noise_model().active:
        ledgers = run_paths(
            lambda i: analysis.ledger_from_trajectory(run(make_state(cfg, basis, i), cfg.T)),
            cfg.paths,
        )
        cum = np.stack([np.cumsum(led.residual) for led in ledgers])
        mean = cum.mean(axis=0)
        se = cum.std(axis=0, ddof=1) / np.sqrt(cfg.paths) if cfg.paths > 1 else np.full_like(mean, np.inf)
        z = np.abs(mean) / np.maximum(se, 1e-300)
        criteria.append(Criterion(
            "mean ledger residual within 3 SE of 0 at every output time",
            bool(np.all(z <= 3.0)), f"max |mean|/SE = {float(np.max(z)):.3f} over {cum.shape[1]} times"))
        metrics.update({"max_z": float(np.max(z)), "final_mean_residual": float(mean[-1]), "final_se": float(se[-1])})
    else:
        half = replace(cfg, dt=cfg.dt / 2.0, steps=cfg.steps * 2)
        _, s1 = analysis.energy_audit(
            run(make_state(cfg, basis, 0), cfg.T),
            refined=run(make_state(half, basis, 0), half.T),
        )
        ratio = s1["residual_halving_ratio"]
        criteria.append(Criterion(
            "residual halves under dt-halving", 0.3 <= ratio <= 0.7, f"ratio = {ratio:.4f}"))
        if cfg.nu > 0 and cfg.forcing_kind == "zero":
            criteria.append(Criterion(
                "energy nonincreasing", bool(s1["energy_nonincreasing"]), "noise off, f = 0"))
        metrics.update({"residual_ratio": ratio, "accumulated_residual": s1["accumulated_residual"]})
    return criteria, metrics, artifacts


def _experiment_moments(cfg: SimConfig, out_dir: str):
    criteria = []

    def estimate(local_cfg: SimConfig) -> analysis.MomentReport:
        basis = local_cfg.basis()
        state0 = make_state(local_cfg, basis, 0)
        e0 = basis.energy(state0.c, local_cfg.kappa)
        f = state0.forcing
        f_int = float(np.sum(f**2)) * local_cfg.T if f.ndim == 1 else float(np.sum(f**2) * local_cfg.dt)
        return analysis.moment_estimate(
            lambda i: run(make_state(local_cfg, basis, i), local_cfg.T),
            local_cfg.paths, local_cfg.gamma, local_cfg.noise_model(), e0, f_int, local_cfg.T,
        )

    base = estimate(cfg)
    double_n = estimate(replace(cfg, n_modes=cfg.n_modes * 2))
    if cfg.alpha > 0:
        alpha_leg = estimate(replace(cfg, alpha=cfg.alpha / 2.0))
    else:
        alpha_leg = None

    def within(a: analysis.MomentReport, b: analysis.MomentReport, tag: str):
        pairs = [
            ("sup energy", a.sup_energy, a.sup_energy_se, b.sup_energy, b.sup_energy_se),
            ("gradient p-integral", a.grad_p_integral, a.grad_p_integral_se,
             b.grad_p_integral, b.grad_p_integral_se),
        ]
        for name, va, sa, vb, sb in pairs:
            se = max(np.hypot(sa, sb), 1e-300)
            criteria.append(Criterion(
                f"{name} stable under {tag}", abs(va - vb) <= 2.0 * se,
                f"|delta|/SE = {abs(va - vb) / se:.3f}"))

    within(base, double_n, "mode doubling")
    if alpha_leg is not None:
        within(base, alpha_leg, "alpha halving")
    if base.bound is not None:
        criteria.append(Criterion(
            "sup-energy moment within explicit bound", bool(base.passed),
            f"estimate = {base.sup_energy:.6g}, bound = {base.bound:.6g} "
            f"({'rigorous' if base.bound_rigorous else 'extended'})"))
    metrics = {
        "base": asdict(base),
        "double_n": asdict(double_n),
        "half_alpha": asdict(alpha_leg) if alpha_leg is not None else None,
        "excluded_paths": base.excluded_paths,
    }
    return criteria, metrics, []


def _experiment_uniqueness(cfg: SimConfig, out_dir: str):
    basis = cfg.basis()
    weight_c = analysis.calibrate_ladyzhenskaya(basis)
    delta = 1e-3

    def pair_factory(local_cfg: SimConfig, perturb: float):
        def make_pair(path: int):
            sa = make_state(local_cfg, basis, path)
            sb = make_state(local_cfg, basis, path)
            if perturb:
                cb = sb.c.copy()
                wave = np.flatnonzero(basis.k2 > 0)
                cb[wave[0]] += perturb
                sb = replace(sb, c=cb)
            return sa, sb
        return make_pair

    identical = analysis.twin_uniqueness(pair_factory(cfg, 0.0), cfg.T, min(cfg.paths, 8), weight_c)
    perturbed = analysis.twin_uniqueness(pair_factory(cfg, delta), cfg.T, cfg.paths, weight_c)
    half = replace(cfg, dt=cfg.dt / 2.0, steps=cfg.steps * 2)
    perturbed_half = analysis.twin_uniqueness(pair_factory(half, delta), half.T, cfg.paths, weight_c)

    stability = perturbed_half.gronwall_constant / max(perturbed.gronwall_constant, 1e-300)
    criteria = [
        Criterion("identical data stays bitwise equal", bool(identical.bitwise_identical),
                  "shared increments, equal initial coefficients"),
        Criterion("weighted Gronwall constant stable under dt-halving",
                  0.5 <= stability <= 2.0, f"ratio = {stability:.4f}"),
    ]
    metrics = {
        "weight_constant": weight_c,
        "gronwall_constant": perturbed.gronwall_constant,
        "gronwall_constant_half_dt": perturbed_half.gronwall_constant,
        "delta0": perturbed.delta0,
        "per_path_max_ratio": float(np.max(perturbed.per_path_ratios)),
    }
    return criteria, metrics, []


def _experiment_alpha_sweep(cfg: SimConfig, out_dir: str):
    basis = cfg.basis()

    def state_for(alpha: float) -> GalerkinState:
        local = replace(cfg, alpha=alpha)
        local.validate()
        return make_state(local, basis, 0)

    alphas = [0.25, 0.125, 0.0625, 0.03125]
    rows = analysis.alpha_sweep(state_for, cfg.T, alphas)
    damping = [r.damping_integral for r in rows]
    dists = [r.distance_to_reference for r in rows]
    criteria = [
        Criterion("damping contribution strictly decreasing along alpha = 1/n",
                  all(b < a for a, b in zip(damping, damping[1:])),
                  f"2 alpha int ||u||_q^q dt = {damping}"),
        Criterion("distance to alpha = 0 reference decreasing",
                  all(b < a for a, b in zip(dists, dists[1:])),
                  f"final-time distances = {dists}"),
    ]
    metrics = {"rows": [asdict(r) for r in rows]}
    return criteria, metrics, []


def _experiment_pressure(cfg: SimConfig, out_dir: str):
    n = max(cfg.grid_n, 64)
    x = np.arange(n) * 2.0 * np.pi / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    u = np.stack([np.sin(xx) * np.cos(yy), -np.cos(xx) * np.sin(yy)])
    h = fields.SymTensorField(u[0] * u[0], u[0] * u[1], u[1] * u[1])
    pi = pressure.recover_pressure(h)
    tg_err = float(np.max(np.abs(pi + 0.25 * (np.cos(2 * xx) + np.cos(2 * yy)))))

    basis = cfg.basis()
    traj = run(make_state(cfg, basis, 0), cfg.T)
    parts = pressure.decompose_pressure(traj)
    recon = parts.max_residual()
    mom = pressure.momentum_gradient_residual(traj, parts)
    doubled = pressure.decompose_pressure(replace(traj, increments=2.0 * traj.increments))
    doubling_exact = bool(np.array_equal(doubled.pi_phi, 2.0 * parts.pi_phi))
    pi_h_max = float(np.max(np.abs(parts.pi_h)))

    csv_path = os.path.join(out_dir, "pressure.csv")
    pressure.pressure_csv(csv_path, parts, cfg.p, cfg.q)

    criteria = [
        Criterion("vortex-array pressure matches closed form", tg_err < 1e-10, f"max error = {tg_err:.3e}"),
        Criterion("recombination residual < 1e-8 per slice", recon < 1e-8, f"max = {recon:.3e}"),
        Criterion("stochastic part doubles exactly with increments", doubling_exact, "bitwise"),
        Criterion("momentum identity vs gradient modes < 1e-7", mom < 1e-7, f"max = {mom:.3e}"),
        Criterion("harmonic part vanishes on the torus", pi_h_max < 1e-10, f"max |pi_h| = {pi_h_max:.3e}"),
    ]
    metrics = {"tg_error": tg_err, "recombination_residual": recon, "momentum_residual": mom}
    return criteria, metrics, [csv_path]


def _experiment_propcheck(cfg: SimConfig, out_dir: str):
    criteria = []
    total_violations = 0
    for p in (1.2, 1.5, 2.0, 3.0, 4.0):
        violations, worst = monotonicity_sweep(p, samples=10_000, seed=cfg.seed)
        total_violations += violations
        criteria.append(Criterion(
            f"shear-rate inequalities hold at p = {p}", violations == 0,
            f"violations = {violations}, worst margin = {worst:.3e}"))
    model = cfg.noise_model()
    if model.active:
        rep = verify_noise_conditions(model, samples=10_000, seed=cfg.seed)
        criteria.append(Criterion(
            "noise growth/Lipschitz/decay envelopes hold", rep.passed,
            f"K_emp = {rep.K_emp:.6g} <= {rep.K:.6g}, L_emp = {rep.L_emp:.6g} <= {rep.L:.6g}, "
            f"C_emp = {rep.C_emp:.6g} <= {rep.C:.6g}"))
    korn_worst = 0.0
    for s in range(100):
        rng = np.random.default_rng([cfg.seed, s])
        v = fields.leray_project(rng.standard_normal((2, cfg.grid_n, cfg.grid_n)), (cfg.grid_n - 2) // 3)
        d = fields.sym_gradient(v)
        lhs = float(np.sum(d.modulus() ** 2) * fields.quad_weight(cfg.grid_n))
        rhs = 0.5 * fields.grad_l2_norm(v) ** 2
        korn_worst = max(korn_worst, abs(lhs - rhs) / max(rhs, 1e-300))
    criteria.append(Criterion(
        "symmetric-gradient identity on 100 random solenoidal fields",
        korn_worst < 1e-10, f"worst relative error = {korn_worst:.3e}"))
    basis = cfg.basis()
    mono = solvability.check_weak_monotonicity(
        basis, cfg.rheology(), model, radius=5.0, samples=1000, seed=cfg.seed)
    coer = solvability.check_coercivity(
        basis, cfg.rheology(), model, forcing_coefficients(cfg, basis)
        if cfg.forcing_kind != "files" else np.zeros(basis.n), samples=1000, seed=cfg.seed)
    criteria.append(Criterion(
        "weak monotonicity margin nonnegative", mono.passed,
        f"worst margin = {mono.worst_margin:.3e}, fitted C = {mono.fitted_constant:.6g}"))
    criteria.append(Criterion(
        "weak coercivity margin nonnegative", coer.passed,
        f"worst margin = {coer.worst_margin:.3e}, fitted C = {coer.fitted_constant:.6g}"))
    metrics = {
        "monotonicity_violations": total_violations,
        "korn_worst": korn_worst,
        "monotonicity_fitted": mono.fitted_constant,
        "coercivity_fitted": coer.fitted_constant,
    }
    return criteria, metrics, []


def _experiment_bogovskii(cfg: SimConfig, out_dir: str):
    resolutions = (32, 64, 128)
    n_sources = 20
    residuals = np.zeros((len(resolutions), n_sources))
    ratios = np.zeros_like(residuals)
    for ri, n in enumerate(resolutions):
        m = pressure.midpoints(n)
        xx, yy = np.meshgrid(m, m, indexing="ij")
        xis = []
        for l in range(n_sources):
            rng = np.random.default_rng([cfg.seed, l])
            xi = np.zeros((n, n))
            for j in range(1, 4):
                for k in range(1, 4):
                    xi += rng.standard_normal() * np.sin(j * np.pi * xx) * np.sin(k * np.pi * yy)
            xis.append(xi - xi.mean())
        ws = pressure.bogovskii_solve_batch(np.array(xis), n)
        for l in range(n_sources):
            prob = pressure.BogovskiiProblem(xis[l], n)
            residuals[ri, l] = pressure.divergence_residual(prob, ws[l])
            ratios[ri, l] = pressure.gradient_ratio(prob, ws[l])
    decreasing = bool(np.all(residuals[1:] < residuals[:-1]))
    ratio_bound = float(np.max(ratios))
    criteria = [
        Criterion("divergence residual decreases across resolutions",
                  decreasing, f"per-source residuals {residuals.tolist()}"),
        Criterion("gradient/source ratio bounded across the batch",
                  np.isfinite(ratio_bound), f"max ratio = {ratio_bound:.4f}"),
    ]
    metrics = {
        "resolutions": list(resolutions),
        "residuals": residuals.tolist(),
        "gradient_ratios": ratios.tolist(),
        "ratio_bound": ratio_bound,
    }
    return criteria, metrics, []


_DISPATCH = {
    "simulate": _experiment_simulate,
    "energy-audit": _experiment_energy_audit,
    "moments": _experiment_moments,
    "uniqueness": _experiment_uniqueness,
    "alpha-sweep": _experiment_alpha_sweep,
    "pressure": _experiment_pressure,
    "propcheck": _experiment_propcheck,
    "bogovskii": _experiment_bogovskii,
}


def run_experiment(cfg: SimConfig, out_dir: str) -> RunReport:
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    criteria, metrics, artifacts = _DISPATCH[cfg.experiment](cfg, out_dir)
    wall = time.perf_counter() - t0
    report = RunReport(
        config=config_echo(cfg),
        criteria=criteria,
        metrics=metrics,
        artifacts=[os.path.relpath(a, out_dir) for a in artifacts],
        versions=_versions(),
        wall_clock=wall,
    )
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nsvsim",
        description="Spectral Galerkin simulator and verification harness for "
        "stochastic power-law Navier-Stokes-Voigt flow on the 2D torus.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="config override, repeatable")
    args = parser.parse_args(argv)

    overrides = list(args.override)
    overrides.append(f"experiment={args.experiment}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.paths is not None:
        overrides.append(f"paths={args.paths}")
    try:
        cfg = parse_config(args.config, overrides)
        report = run_experiment(cfg, args.out)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for crit in report.criteria:
        print(f"[{'PASS' if crit.passed else 'FAIL'}] {crit.name}: {crit.details}")
    print(f"report: {os.path.join(args.out, 'report.json')}  wall-clock: {report.wall_clock:.2f}s")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
