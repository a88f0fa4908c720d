"""End-to-end experiment orchestration.

Three experiments are wired here: Monte Carlo value estimation (best
leader candidate against the grid-synthesized responder), the invariance
comparison of those estimates across probability-space variants, and the
penalty-constant convergence study with a Monte Carlo cross-check of the
penalized value.  Reports render to deterministic text and CSV so runs
with the same config and seed produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import DomainGrid, ValueField
from .model import GameProblem, validate_problem
from .pde import (
    IsaacsSolver,
    PucciParams,
    RateReport,
    SolveConfig,
    convergence_study,
    extend_problem,
    solve_penalized,
)
from .policies import (
    CandidateControlSet,
    ConstantPolicy,
    FeedbackAlphaPolicy,
    FeedbackBetaPolicy,
    build_alpha_selector,
    build_beta_selector,
)
from .simulate import VARIANTS, ControlAdaptedSpec, SimConfig, simulate_to_exit

__all__ = [
    "ValueEstimate",
    "InvarianceReport",
    "VkConvergenceReport",
    "ExperimentConfig",
    "VariantParams",
    "build_variant_spec",
    "estimate_value",
    "run_invariance_suite",
    "run_vk_convergence",
]


@dataclass(frozen=True)
class VariantParams:
    """Magnitudes of the admissible changes each variant applies.

    The per-pair sign pattern alternates with the action indices so that
    every non-baseline variant is genuinely policy dependent.  The
    defaults keep the step-size bias differences between variants well
    inside the Monte Carlo noise at the default dt.
    """

    pi_scale: float = 0.3
    r_low: float = 0.75
    r_high: float = 1.4
    rotation: str = "flip"  # "flip" or an angle in radians for d1 >= 2


def build_variant_spec(
    problem: GameProblem, name: str, params: VariantParams = VariantParams()
) -> ControlAdaptedSpec:
    """Per-action-pair (r, pi, noise) tables for a named variant."""
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}")
    na, nb, d1 = problem.n_alpha_ext, problem.n_beta, problem.d1
    r = np.ones((na, nb))
    pi = np.zeros((na, nb, d1))
    q = np.broadcast_to(np.eye(d1), (na, nb, d1, d1)).copy()
    parity = (np.add.outer(np.arange(na), np.arange(nb)) % 2).astype(float)
    sign = 1.0 - 2.0 * parity  # +1 on even (ia+ib), -1 on odd
    if name in ("time_change", "combined"):
        r = np.where(parity == 0.0, params.r_low, params.r_high)
    if name in ("girsanov", "combined"):
        pi[:, :, 0] = params.pi_scale * sign
    if name in ("rotated_noise", "combined"):
        if params.rotation == "flip" or d1 == 1:
            q *= np.where(parity == 0.0, 1.0, -1.0)[:, :, None, None]
        else:
            angle = float(params.rotation)
            for ia in range(na):
                for ib in range(nb):
                    th = angle * ((ia + ib) % 2)
                    rot = np.eye(d1)
                    rot[0, 0] = rot[1, 1] = math.cos(th)
                    rot[0, 1] = -math.sin(th)
                    rot[1, 0] = math.sin(th)
                    q[ia, ib] = rot
    return ControlAdaptedSpec(
        variant=name,
        r_table=r,
        pi_table=pi,
        noise_table=q,
        delta1=problem.delta1,
        K1=problem.K1,
    )


@dataclass
class ValueEstimate:
    x0: tuple
    estimate: float
    se: float
    n_paths: int
    censored_fraction: float
    variant: str
    candidate_size: int
    best_candidate: str
    candidate_means: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.se < 0:
            raise ValueError("standard error must be nonnegative")
        if not 0.0 <= self.censored_fraction <= 1.0:
            raise ValueError("censored fraction must lie in [0, 1]")


def estimate_value(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    beta_policy,
    candidates: CandidateControlSet,
    cfg: SimConfig,
) -> ValueEstimate:
    """Max over leader candidates of the MC mean payoff against ``beta_policy``.

    All candidates reuse the same seed, so the Gaussian stream is common
    across them and the maximization is a low-variance paired comparison.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    best = None
    means = {}
    for policy, name in zip(candidates.policies, candidates.names()):
        batch = simulate_to_exit(problem, spec, x0, policy, beta_policy, cfg)
        pay = batch.payoff
        mean = float(pay.mean())
        means[name] = mean
        if best is None or mean > best[0]:
            se = float(pay.std(ddof=1) / math.sqrt(len(pay)))
            best = (mean, se, batch.censored_fraction, name)
    return ValueEstimate(
        x0=tuple(float(v) for v in x0),
        estimate=best[0],
        se=best[1],
        n_paths=cfg.n_paths,
        censored_fraction=best[2],
        variant=spec.variant,
        candidate_size=len(candidates),
        best_candidate=best[3],
        candidate_means=means,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    problem: GameProblem
    points: tuple[tuple[float, ...], ...]
    variants: tuple[str, ...] = VARIANTS
    variant_params: VariantParams = VariantParams()
    sim: SimConfig = SimConfig()
    solve: SolveConfig = SolveConfig()
    h: float = 1 / 128
    pucci: PucciParams | None = None
    K_list: tuple[float, ...] = (1, 2, 4, 8, 16, 32, 64)
    seed: int = 0
    z_threshold: float = 3.0
    budget_h2: float = 4.0
    budget_sqrt_dt: float = 0.65

    def __post_init__(self):
        for p in self.points:
            if not self.problem.domain.contains(np.asarray(p, dtype=float)[None, :])[0]:
                raise ValueError(f"evaluation point {p} is not interior to the domain")

    @property
    def budget(self) -> float:
        return self.budget_h2 * self.h**2 + self.budget_sqrt_dt * math.sqrt(self.sim.dt)


@dataclass
class InvarianceReport:
    points: tuple[tuple[float, ...], ...]
    variants: tuple[str, ...]
    estimates: dict  # (point index, variant name) -> ValueEstimate
    pde_values: list[float]
    z_scores: np.ndarray  # (n_points, n_variants, n_variants), antisymmetric
    budget: float
    z_threshold: float

    @property
    def z_pass(self) -> bool:
        return bool(np.max(np.abs(self.z_scores)) <= self.z_threshold)

    @property
    def budget_pass(self) -> bool:
        for ip in range(len(self.points)):
            for var in self.variants:
                est = self.estimates[(ip, var)]
                if abs(est.estimate - self.pde_values[ip]) > self.budget + 3.0 * est.se:
                    return False
        return True

    @property
    def passed(self) -> bool:
        return self.z_pass and self.budget_pass

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def summary(self) -> str:
        lines = ["invariance suite"]
        lines.append(f"budget (C h^2 + C' sqrt(dt)): {self.budget:.6f}")
        for ip, pt in enumerate(self.points):
            coord = ",".join(f"{v:g}" for v in pt)
            lines.append(f"point ({coord}): PDE value {self.pde_values[ip]:.6f}")
            for var in self.variants:
                e = self.estimates[(ip, var)]
                gap = e.estimate - self.pde_values[ip]
                lines.append(
                    f"  {var:13s} {e.estimate:.6f} +- {e.se:.6f} "
                    f"(gap {gap:+.6f}, censored {e.censored_fraction:.4f}, "
                    f"best {e.best_candidate})"
                )
        lines.append(f"max |z| over pairs: {self.max_abs_z():.3f} (threshold {self.z_threshold:g})")
        lines.append(f"z-score check     : {'PASS' if self.z_pass else 'FAIL'}")
        lines.append(f"PDE budget check  : {'PASS' if self.budget_pass else 'FAIL'}")
        lines.append(f"overall           : {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(
                "point_index,x0,variant,estimate,se,n_paths,censored_fraction,"
                "pde_value,best_candidate\n"
            )
            for ip, pt in enumerate(self.points):
                coord = ";".join(f"{v:.17g}" for v in pt)
                for var in self.variants:
                    e = self.estimates[(ip, var)]
                    fh.write(
                        f"{ip},{coord},{var},{e.estimate:.17g},{e.se:.17g},"
                        f"{e.n_paths},{e.censored_fraction:.17g},"
                        f"{self.pde_values[ip]:.17g},{e.best_candidate}\n"
                    )

    def z_to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("point_index,variant_a,variant_b,z\n")
            for ip in range(len(self.points)):
                for i, va in enumerate(self.variants):
                    for j, vb in enumerate(self.variants):
                        if j <= i:
                            continue
                        fh.write(f"{ip},{va},{vb},{self.z_scores[ip, i, j]:.17g}\n")


def _default_candidates(problem: GameProblem, alpha_selector) -> CandidateControlSet:
    policies = [ConstantPolicy(ia, name=f"const_{problem.actions.a_labels[ia]}")
                for ia in range(problem.n_alpha)]
    policies.append(FeedbackAlphaPolicy(alpha_selector, lag_n=0))
    return CandidateControlSet(policies)


def _solve_and_policies(config: ExperimentConfig, problem: GameProblem):
    solver = IsaacsSolver(h=config.h, cfg=config.solve)
    solver.fit(problem)
    eps = 10.0 * config.solve.residual_tol
    beta_sel = build_beta_selector(problem, solver.value_, eps)
    alpha_sel = build_alpha_selector(problem, solver.value_, eps)
    beta_policy = FeedbackBetaPolicy(beta_sel, lag_n=0)
    candidates = _default_candidates(problem, alpha_sel)
    return solver, beta_policy, candidates


def run_invariance_suite(config: ExperimentConfig) -> InvarianceReport:
    """Solve the PDE once, then compare MC estimates across all variants."""
    problem = config.problem
    if "baseline" not in config.variants:
        raise ValueError("variant list must include the baseline")
    grid = DomainGrid.build(problem.domain, config.h)
    report = validate_problem(problem, grid)
    if not report.passed:
        raise RuntimeError("validation stage failed:\n" + report.summary())
    try:
        solver, beta_policy, candidates = _solve_and_policies(config, problem)
    except Exception as exc:
        raise RuntimeError(f"pde stage failed: {exc}") from exc
    cfg = SimConfig(
        dt=config.sim.dt,
        t_max=config.sim.t_max,
        n_paths=config.sim.n_paths,
        seed=config.seed,
        lag_n=config.sim.lag_n,
    )
    pde_values = [float(solver.predict(np.asarray(p)[None, :])[0]) for p in config.points]
    estimates = {}
    for ip, pt in enumerate(config.points):
        for var in config.variants:
            spec = build_variant_spec(problem, var, config.variant_params)
            try:
                estimates[(ip, var)] = estimate_value(
                    problem, spec, pt, beta_policy, candidates, cfg
                )
            except Exception as exc:
                raise RuntimeError(
                    f"simulation stage failed at point {pt}, variant {var}: {exc}"
                ) from exc
    nv = len(config.variants)
    z = np.zeros((len(config.points), nv, nv))
    for ip in range(len(config.points)):
        for i in range(nv):
            for j in range(nv):
                if i == j:
                    continue
                ei = estimates[(ip, config.variants[i])]
                ej = estimates[(ip, config.variants[j])]
                denom = math.sqrt(ei.se**2 + ej.se**2)
                z[ip, i, j] = (ei.estimate - ej.estimate) / denom if denom > 0 else 0.0
    return InvarianceReport(
        points=config.points,
        variants=config.variants,
        estimates=estimates,
        pde_values=pde_values,
        z_scores=z,
        budget=config.budget,
        z_threshold=config.z_threshold,
    )


@dataclass
class VkConvergenceReport:
    """Penalty-constant study plus a Monte Carlo cross-check at the extremes."""

    rate: RateReport
    monotone: bool
    cross_checks: dict  # K -> (mc_estimate, mc_se, pde_value)
    v_mc: float
    v_mc_se: float

    @property
    def mc_pass(self) -> bool:
        for K, (mc, se, pde) in self.cross_checks.items():
            if mc < self.v_mc - 3.0 * math.sqrt(se**2 + self.v_mc_se**2):
                return False
        return True

    def summary(self) -> str:
        lines = ["penalty-constant convergence"]
        for k, e in zip(self.rate.K_values, self.rate.sup_errors):
            lines.append(f"  K = {k:<6g} sup gap {e:.3e}")
        lines.append(
            f"fitted decay: gap ~ {self.rate.fitted_N:.3g} * K^-{self.rate.fitted_chi:.3g}"
        )
        lines.append(f"nodewise monotone in K: {'yes' if self.monotone else 'NO'}")
        lines.append(f"plain game MC value: {self.v_mc:.6f} +- {self.v_mc_se:.6f}")
        for K, (mc, se, pde) in sorted(self.cross_checks.items()):
            lines.append(
                f"  K = {K:<6g} penalized MC {mc:.6f} +- {se:.6f} (grid {pde:.6f})"
            )
        lines.append(f"MC ordering check  : {'PASS' if self.mc_pass else 'FAIL'}")
        return "\n".join(lines)


def run_vk_convergence(
    config: ExperimentConfig, mc_point=None, mc_cross_check: bool = True
) -> VkConvergenceReport:
    """Penalized-solution gap study with an MC cross-check at min and max K."""
    problem = config.problem
    pucci = config.pucci or PucciParams.build(problem.d, delta_hat=0.5)
    K_list = list(config.K_list)
    rate = convergence_study(problem, pucci, problem.g, K_list, config.solve, config.h)
    grid = DomainGrid.build(problem.domain, config.h)
    prev = None
    monotone = True
    tol = 10.0 * config.solve.residual_tol
    for K in K_list:
        u_K = solve_penalized(problem, pucci, K, problem.g, config.solve, grid=grid)
        if prev is not None:
            mask = grid.in_closure
            if np.max(u_K.values[mask] - prev.values[mask]) > tol:
                monotone = False
        prev = u_K

    cross = {}
    v_mc = v_se = 0.0
    if mc_cross_check:
        pt = np.asarray(mc_point if mc_point is not None else config.points[0], dtype=float)
        cfg = SimConfig(
            dt=config.sim.dt,
            t_max=config.sim.t_max,
            n_paths=config.sim.n_paths,
            seed=config.seed,
            lag_n=config.sim.lag_n,
        )
        solver, beta_policy, candidates = _solve_and_policies(config, problem)
        base_spec = ControlAdaptedSpec.baseline(problem)
        est = estimate_value(problem, base_spec, pt, beta_policy, candidates, cfg)
        v_mc, v_se = est.estimate, est.se
        for K in (K_list[0], K_list[-1]):
            ext = extend_problem(problem, pucci, K)
            ext_cfg_pde = IsaacsSolver(h=config.h, cfg=config.solve)
            ext_cfg_pde.fit(ext, problem.g, grid=grid)
            eps = 10.0 * config.solve.residual_tol
            beta_sel = build_beta_selector(ext, ext_cfg_pde.value_, eps)
            alpha_sel = build_alpha_selector(ext, ext_cfg_pde.value_, eps)
            spec = ControlAdaptedSpec.baseline(ext)
            cand = _default_candidates(ext, alpha_sel)
            est_K = estimate_value(
                ext, spec, pt, FeedbackBetaPolicy(beta_sel, lag_n=0), cand, cfg
            )
            pde_val = float(ext_cfg_pde.predict(pt[None, :])[0])
            cross[float(K)] = (est_K.estimate, est_K.se, pde_val)
    return VkConvergenceReport(
        rate=rate, monotone=monotone, cross_checks=cross, v_mc=v_mc, v_mc_se=v_se
    )
