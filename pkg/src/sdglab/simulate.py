"""Exit-time Euler-Maruyama simulation under probability-space variants.

A variant assigns to each action pair a time-change rate r, a measure-
change drift pi, and an orthogonal transform of the common Gaussian
increments (a policy-dependent driving noise).  The state obeys

    dx = r sigma dw + r^2 (b + sigma pi) dt,

and two accumulators ride along: the discount integral

    phi_t = int r^2 c dt,

and the measure-change exponent

    psi_t = int ( (1/2) r^2 |pi|^2 dt + r pi . dw ),

so that exp(-psi) is the exponential martingale that removes the pi
drift under the changed measure.  Payoffs are discounted by
exp(-phi - psi); paths that fail to leave the domain by the time horizon
are censored with a zero terminal term, and the censored mass is
reported.

All simulation is vectorized across paths; the Gaussian draw for (path
i, step k) depends only on the seed, so runs with different variants or
candidate policies but a shared seed use common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import ValueField
from .model import GameProblem

__all__ = [
    "ControlAdaptedSpec",
    "SimConfig",
    "PathState",
    "TrajectoryRecord",
    "TrajectoryBatch",
    "MartingaleReport",
    "BoundReport",
    "ComparisonReport",
    "em_step",
    "simulate_to_exit",
    "girsanov_martingale_check",
    "increment_bound_study",
    "pathwise_comparison",
]

VARIANTS = ("baseline", "time_change", "girsanov", "rotated_noise", "combined")


@dataclass(frozen=True)
class ControlAdaptedSpec:
    """Per-action-pair (r, pi, noise transform) tables.

    ``r_table`` has shape (nA, nB); ``pi_table`` (nA, nB, d1);
    ``noise_table`` (nA, nB, d1, d1) with orthogonal blocks.
    """

    variant: str
    r_table: np.ndarray
    pi_table: np.ndarray
    noise_table: np.ndarray
    delta1: float
    K1: float

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        r = np.asarray(self.r_table)
        if r.min() < self.delta1 - 1e-12 or r.max() > 1.0 / self.delta1 + 1e-12:
            raise ValueError("time-change rates leave [delta1, 1/delta1]")
        pi_norm = np.linalg.norm(self.pi_table, axis=-1)
        if pi_norm.max() > self.K1 + 1e-12:
            raise ValueError("measure-change drift exceeds K1")
        q = self.noise_table
        qqt = np.einsum("abij,abkj->abik", q, q)
        eye = np.eye(q.shape[-1])
        if np.max(np.abs(qqt - eye)) > 1e-12:
            raise ValueError("noise transforms must be orthogonal")

    @staticmethod
    def baseline(problem: GameProblem, variant: str = "baseline") -> "ControlAdaptedSpec":
        na, nb, d1 = problem.n_alpha_ext, problem.n_beta, problem.d1
        return ControlAdaptedSpec(
            variant=variant,
            r_table=np.ones((na, nb)),
            pi_table=np.zeros((na, nb, d1)),
            noise_table=np.broadcast_to(np.eye(d1), (na, nb, d1, d1)).copy(),
            delta1=problem.delta1,
            K1=problem.K1,
        )

    def is_baseline(self) -> bool:
        return (
            np.all(self.r_table == 1.0)
            and np.all(self.pi_table == 0.0)
            and np.all(self.noise_table == np.eye(self.noise_table.shape[-1]))
        )


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    t_max: float = 2.0
    n_paths: int = 10_000
    seed: int = 0
    lag_n: int = 0  # 0: feedback policies read the current (pre-step) state

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_max < 1:
            raise ValueError("truncation horizon must be at least 1")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.lag_n and self.lag_n * self.dt > 1 + 1e-12:
            raise ValueError("policy lag 1/n must not be finer than the timestep")


@dataclass
class PathState:
    t: float
    x: np.ndarray
    phi: float = 0.0
    psi: float = 0.0


@dataclass
class TrajectoryRecord:
    tau: float
    censored: bool
    exit_state: np.ndarray
    phi: float
    psi: float
    running_payoff: float
    terminal_payoff: float

    @property
    def girsanov_weight(self) -> float:
        return math.exp(-self.psi)

    @property
    def payoff(self) -> float:
        return self.running_payoff + self.terminal_payoff


@dataclass
class TrajectoryBatch:
    """Struct-of-arrays over simulated paths."""

    tau: np.ndarray
    censored: np.ndarray
    exit_state: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    running_payoff: np.ndarray
    terminal_payoff: np.ndarray

    def __len__(self) -> int:
        return len(self.tau)

    def record(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            tau=float(self.tau[i]),
            censored=bool(self.censored[i]),
            exit_state=self.exit_state[i].copy(),
            phi=float(self.phi[i]),
            psi=float(self.psi[i]),
            running_payoff=float(self.running_payoff[i]),
            terminal_payoff=float(self.terminal_payoff[i]),
        )

    @property
    def payoff(self) -> np.ndarray:
        return self.running_payoff + self.terminal_payoff

    @property
    def girsanov_weight(self) -> np.ndarray:
        return np.exp(-self.psi)

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    def to_csv(self, path) -> None:
        d = self.exit_state.shape[1]
        cols = ["tau", "censored"] + [f"x{i + 1}" for i in range(d)]
        cols += ["phi", "psi", "running_payoff", "terminal_payoff"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                row = [f"{self.tau[i]:.17g}", str(int(self.censored[i]))]
                row += [f"{v:.17g}" for v in self.exit_state[i]]
                row += [
                    f"{self.phi[i]:.17g}",
                    f"{self.psi[i]:.17g}",
                    f"{self.running_payoff[i]:.17g}",
                    f"{self.terminal_payoff[i]:.17g}",
                ]
                fh.write(",".join(row) + "\n")


def em_step(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    state: PathState,
    ia: int,
    ib: int,
    dW: np.ndarray,
    dt: float,
) -> PathState:
    """One explicit Euler step for a single path; coefficients at the pre-step x."""
    dW = np.asarray(dW, dtype=float)
    if not np.all(np.isfinite(dW)):
        raise ValueError("non-finite Gaussian increment")
    r = float(spec.r_table[ia, ib])
    pi = spec.pi_table[ia, ib]
    q = spec.noise_table[ia, ib]
    dw = q @ dW
    sig = problem.sigma[ia][ib].at(state.x)
    bv = problem.b[ia][ib].at(state.x)
    cv = problem.c[ia][ib].at(state.x)
    x_new = state.x + r * (sig @ dw) + r * r * (bv + sig @ pi) * dt
    phi_new = state.phi + r * r * cv * dt
    psi_new = state.psi + 0.5 * r * r * float(pi @ pi) * dt + r * float(pi @ dw)
    return PathState(t=state.t + dt, x=x_new, phi=phi_new, psi=psi_new)


class _PairCoefficients:
    """Vectorized per-pair coefficient evaluation with constant fast paths."""

    def __init__(self, problem: GameProblem, ia: int, ib: int):
        self.sigma_field = problem.sigma[ia][ib]
        self.b_field = problem.b[ia][ib]
        self.c_field = problem.c[ia][ib]
        self.f_field = problem.f[ia][ib]
        self.sigma_const = self.sigma_field.at(np.zeros(problem.d)) if self.sigma_field.is_constant else None
        self.b_const = self.b_field.at(np.zeros(problem.d)) if self.b_field.is_constant else None
        self.c_const = self.c_field.at(np.zeros(problem.d)) if self.c_field.is_constant else None
        self.f_const = self.f_field.at(np.zeros(problem.d)) if self.f_field.is_constant else None

    def sigma(self, x):
        if self.sigma_const is not None:
            return np.broadcast_to(self.sigma_const, (x.shape[0],) + self.sigma_const.shape)
        return self.sigma_field(x)

    def b(self, x):
        if self.b_const is not None:
            return np.broadcast_to(self.b_const, (x.shape[0],) + self.b_const.shape)
        return self.b_field(x)

    def c(self, x):
        if self.c_const is not None:
            return np.full(x.shape[0], self.c_const)
        return self.c_field(x)

    def f(self, x):
        if self.f_const is not None:
            return np.full(x.shape[0], self.f_const)
        return self.f_field(x)


def _run_ensemble(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    alpha_policy,
    beta_policy,
    cfg: SimConfig,
    *,
    value_field: ValueField | None = None,
    checkpoint_times: tuple[float, ...] = (),
    lag_ns: tuple[int, ...] = (),
    track_exp_psi_integral: bool = False,
):
    """Vectorized ensemble simulation; the single code path behind the ops."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not problem.domain.contains(x0[None, :])[0]:
        raise ValueError("starting point must lie inside the domain")
    n = cfg.n_paths
    d, d1 = problem.d, problem.d1
    dt = cfg.dt
    nb = problem.n_beta
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    coeffs = {
        (ia, ib): _PairCoefficients(problem, ia, ib)
        for ia in range(problem.n_alpha_ext)
        for ib in range(nb)
    }

    X = np.tile(x0, (n, 1))
    phi = np.zeros(n)
    psi = np.zeros(n)
    run_pay = np.zeros(n)
    exp_psi_int = np.zeros(n) if track_exp_psi_integral else None
    tau = np.full(n, cfg.t_max)
    exit_state = X.copy()
    phi_exit = np.zeros(n)
    psi_exit = np.zeros(n)
    censored = np.ones(n, dtype=bool)
    frozen_m = np.zeros(n)  # checkpoint contribution frozen at exit
    alive = np.ones(n, dtype=bool)
    dist = problem.domain.boundary_distance(X)

    # policy lags: each requested n keeps a frozen state snapshot
    policy_lags = sorted(
        {p.lag_n for p in (alpha_policy, beta_policy) if getattr(p, "lag_n", 0)}
    )
    lag_all = sorted(set(policy_lags) | set(lag_ns))
    snapshots = {m: X.copy() for m in lag_all}
    last_cell = {m: 0 for m in lag_all}
    M_acc = {m: np.zeros(n) for m in lag_ns}

    cps = sorted(checkpoint_times)
    cp_values = []
    cp_recorded = 0

    n_steps = int(round(cfg.t_max / dt))
    for k in range(n_steps):
        t = k * dt
        for m in lag_all:
            cell = int(math.floor(m * t + 1e-9))
            if cell > last_cell[m]:
                snapshots[m][alive] = X[alive]
                last_cell[m] = cell
        while cp_recorded < len(cps) and t >= cps[cp_recorded] - 0.5 * dt:
            contrib = frozen_m.copy()
            if alive.any() and value_field is not None:
                contrib[alive] = (
                    value_field.interpolate(X[alive]) * np.exp(-phi[alive] - psi[alive])
                    + run_pay[alive]
                )
            cp_values.append(contrib)
            cp_recorded += 1
        if not alive.any():
            break
        dW = rng.normal(0.0, math.sqrt(dt), size=(n, d1))
        act = np.flatnonzero(alive)
        x_alive = X[act]
        x_alpha = snapshots[alpha_policy.lag_n][act] if getattr(alpha_policy, "lag_n", 0) else x_alive
        ia = alpha_policy.select(k, t, x_alpha)
        if np.isscalar(ia) or ia.ndim == 0:
            ia = np.full(len(act), int(ia))
        x_beta = snapshots[beta_policy.lag_n][act] if getattr(beta_policy, "lag_n", 0) else x_alive
        ib = beta_policy.respond(ia, k, t, x_beta)
        if np.isscalar(ib) or ib.ndim == 0:
            ib = np.full(len(act), int(ib))

        w_old = np.exp(-phi[act] - psi[act])
        x_new = x_alive.copy()
        dphi = np.zeros(len(act))
        dpsi = np.zeros(len(act))
        dpay = np.zeros(len(act))
        pair_code = ia * nb + ib
        for code in np.unique(pair_code):
            gsel = pair_code == code
            rows = act[gsel]
            cia, cib = int(code) // nb, int(code) % nb
            cf = coeffs[(cia, cib)]
            r = float(spec.r_table[cia, cib])
            piv = spec.pi_table[cia, cib]
            q = spec.noise_table[cia, cib]
            xs = X[rows]
            dw = dW[rows] @ q.T
            sig = cf.sigma(xs)
            noise = np.einsum("nij,nj->ni", sig, dw)
            drift = r * r * (cf.b(xs) + np.einsum("nij,j->ni", sig, piv))
            x_new[gsel] = xs + r * noise + drift * dt
            dphi[gsel] = r * r * cf.c(xs) * dt
            dpsi[gsel] = 0.5 * r * r * float(piv @ piv) * dt + r * (dw @ piv)
            dpay[gsel] = r * r * cf.f(xs) * w_old[gsel] * dt

        dist_old = dist[act]
        dist_new = problem.domain.boundary_distance(x_new)
        exiting = dist_new <= 0.0
        scale = np.ones(len(act))
        if exiting.any():
            theta = dist_old[exiting] / (dist_old[exiting] - dist_new[exiting])
            scale[exiting] = theta
        if lag_ns:
            for m in lag_ns:
                diff = x_alive - snapshots[m][act]
                M_acc[m][act] += (
                    np.exp(-phi[act] - psi[act])
                    * np.einsum("ni,ni->n", diff, diff)
                    * scale
                    * dt
                )
        if track_exp_psi_integral:
            exp_psi_int[act] += np.exp(-psi[act]) * scale * dt

        run_pay[act] += dpay * scale
        phi[act] += dphi * scale
        psi[act] += dpsi * scale
        X[act] = x_alive + (x_new - x_alive) * scale[:, None]
        dist[act] = np.where(exiting, 0.0, dist_new)

        if exiting.any():
            rows = act[exiting]
            tau[rows] = t + scale[exiting] * dt
            exit_state[rows] = X[rows]
            phi_exit[rows] = phi[rows]
            psi_exit[rows] = psi[rows]
            censored[rows] = False
            alive[rows] = False
            if value_field is not None:
                frozen_m[rows] = (
                    value_field.interpolate(X[rows]) * np.exp(-phi[rows] - psi[rows])
                    + run_pay[rows]
                )

    while cp_recorded < len(cps):
        contrib = frozen_m.copy()
        if alive.any() and value_field is not None:
            contrib[alive] = (
                value_field.interpolate(X[alive]) * np.exp(-phi[alive] - psi[alive])
                + run_pay[alive]
            )
        cp_values.append(contrib)
        cp_recorded += 1

    # censored paths keep their state at the horizon; terminal term is zero
    exit_state[censored] = X[censored]
    phi_exit[censored] = phi[censored]
    psi_exit[censored] = psi[censored]
    terminal = np.zeros(n)
    hit = ~censored
    if hit.any():
        gvals = problem.g(exit_state[hit])
        terminal[hit] = gvals * np.exp(-phi_exit[hit] - psi_exit[hit])

    batch = TrajectoryBatch(
        tau=tau,
        censored=censored,
        exit_state=exit_state,
        phi=phi_exit,
        psi=psi_exit,
        running_payoff=run_pay,
        terminal_payoff=terminal,
    )
    extras = {
        "checkpoints": np.asarray(cp_values) if cps else None,
        "M_acc": M_acc,
        "exp_psi_integral": exp_psi_int,
    }
    return batch, extras


def simulate_to_exit(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    alpha_policy,
    beta_policy,
    cfg: SimConfig,
) -> TrajectoryBatch:
    """Simulate cfg.n_paths trajectories until exit or censoring."""
    batch, _ = _run_ensemble(problem, spec, x0, alpha_policy, beta_policy, cfg)
    return batch


@dataclass
class MartingaleReport:
    weight_mean: float
    weight_se: float
    censored_fraction: float
    censored_weight_mass: float  # mean of e^{-psi} restricted to censored paths
    exp_psi_integral_mean: float

    def summary(self) -> str:
        return (
            f"mean exp(-psi_tau)      : {self.weight_mean:.6f} +- {self.weight_se:.6f}\n"
            f"censored fraction       : {self.censored_fraction:.6f}\n"
            f"censored weight mass    : {self.censored_weight_mass:.6f}\n"
            f"E int exp(-psi) ds      : {self.exp_psi_integral_mean:.6f}"
        )


def girsanov_martingale_check(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    alpha_policy,
    beta_policy,
    cfg: SimConfig,
) -> MartingaleReport:
    """Monte Carlo check of E exp(-psi_tau) = 1 and the occupation bound."""
    batch, extras = _run_ensemble(
        problem, spec, x0, alpha_policy, beta_policy, cfg, track_exp_psi_integral=True
    )
    w = np.exp(-batch.psi)
    # censored paths contribute zero per the tau = infinity convention;
    # their weight is reported separately as truncation-bias mass
    w_eff = np.where(batch.censored, 0.0, w)
    n = len(batch)
    mean = float(w_eff.mean())
    se = float(w_eff.std(ddof=1) / math.sqrt(n))
    cm = float(w[batch.censored].sum() / n) if batch.censored.any() else 0.0
    return MartingaleReport(
        weight_mean=mean,
        weight_se=se,
        censored_fraction=batch.censored_fraction,
        censored_weight_mass=cm,
        exp_psi_integral_mean=float(extras["exp_psi_integral"].mean()),
    )


@dataclass
class BoundReport:
    n_values: list[int]
    M_values: list[float]  # E int e^{-phi-psi} |x_t - x_{lag}|^2 dt
    M_se: list[float]

    @property
    def scaled(self) -> list[float]:
        return [m * n for n, m in zip(self.n_values, self.M_values)]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("n,M,M_se,M_times_n\n")
            for n, m, s in zip(self.n_values, self.M_values, self.M_se):
                fh.write(f"{n},{m:.17g},{s:.17g},{m * n:.17g}\n")


def increment_bound_study(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    alpha_policy,
    beta_policy,
    cfg: SimConfig,
    n_list,
) -> BoundReport:
    """Estimate the weighted squared lag increment integral for each lag n."""
    n_list = [int(v) for v in n_list]
    if sorted(n_list) != n_list:
        raise ValueError("n_list must be increasing")
    if cfg.dt > 1.0 / (4 * max(n_list)):
        raise ValueError("timestep too coarse for the finest lag")
    batch, extras = _run_ensemble(
        problem, spec, x0, alpha_policy, beta_policy, cfg, lag_ns=tuple(n_list)
    )
    Ms, ses = [], []
    for m in n_list:
        acc = extras["M_acc"][m]
        Ms.append(float(acc.mean()))
        ses.append(float(acc.std(ddof=1) / math.sqrt(len(acc))))
    return BoundReport(n_list, Ms, ses)


@dataclass
class ComparisonReport:
    occupation_fraction: float
    mean_sup_divergence: float
    se_sup_divergence: float
    mean_occupation_time: float
    ratio: float  # E sup|x-y| / sqrt(E occupation time)


def pathwise_comparison(
    problem: GameProblem,
    spec: ControlAdaptedSpec,
    x0,
    mixed_alpha_policy,
    beta_policy,
    cfg: SimConfig,
    T: float,
    projection: np.ndarray,
) -> ComparisonReport:
    """Couple the penalty-visiting path with its projected twin on one noise.

    Requires pi == 0.  ``projection`` maps every extended alpha index to a
    regular one (identity on the regular actions).
    """
    if np.any(spec.pi_table != 0.0):
        raise ValueError("pathwise comparison requires pi identically zero")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n, d, d1 = cfg.n_paths, problem.d, problem.d1
    nb = problem.n_beta
    dt = cfg.dt
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    coeffs = {
        (ia, ib): _PairCoefficients(problem, ia, ib)
        for ia in range(problem.n_alpha_ext)
        for ib in range(nb)
    }
    projection = np.asarray(projection, dtype=int)
    X = np.tile(x0, (n, 1))
    Y = X.copy()
    supdiff = np.zeros(n)
    occ = np.zeros(n)
    running = np.ones(n, dtype=bool)  # stop at gamma = T ^ first exit of either
    n_steps = int(round(T / dt))
    for k in range(n_steps):
        if not running.any():
            break
        t = k * dt
        act = np.flatnonzero(running)
        dW = rng.normal(0.0, math.sqrt(dt), size=(n, d1))
        ia = mixed_alpha_policy.select(k, t, X[act])
        if np.isscalar(ia) or ia.ndim == 0:
            ia = np.full(len(act), int(ia))
        ia_proj = projection[ia]
        for arr, actions, xsrc in ((X, ia, X), (Y, ia_proj, Y)):
            ib = beta_policy.respond(actions, k, t, xsrc[act])
            if np.isscalar(ib) or ib.ndim == 0:
                ib = np.full(len(act), int(ib))
            code = actions * nb + ib
            for cval in np.unique(code):
                gsel = code == cval
                rows = act[gsel]
                cia, cib = int(cval) // nb, int(cval) % nb
                cf = coeffs[(cia, cib)]
                r = float(spec.r_table[cia, cib])
                xs = arr[rows]
                sig = cf.sigma(xs)
                noise = np.einsum("nij,nj->ni", sig, dW[rows])
                arr[rows] = xs + r * noise + r * r * cf.b(xs) * dt
        occ[act] += np.where(ia >= problem.n_alpha, dt, 0.0)
        diff = np.linalg.norm(X[act] - Y[act], axis=1)
        supdiff[act] = np.maximum(supdiff[act], diff)
        inside = problem.domain.contains(X[act]) & problem.domain.contains(Y[act])
        running[act] = inside
    mean_sup = float(supdiff.mean())
    se_sup = float(supdiff.std(ddof=1) / math.sqrt(n))
    mean_occ = float(occ.mean())
    ratio = mean_sup / math.sqrt(mean_occ) if mean_occ > 0 else math.inf
    return ComparisonReport(
        occupation_fraction=mean_occ / T,
        mean_sup_divergence=mean_sup,
        se_sup_divergence=se_sup,
        mean_occupation_time=mean_occ,
        ratio=ratio,
    )
