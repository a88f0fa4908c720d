"""Monotone finite-difference discretization and policy-iteration solvers.

The elliptic operator of each action pair is discretized with central
second differences on the diagonal, Kushner-style splitting of the mixed
terms by the sign of a_ij, and first differences upwinded by the sign of
b_i, which makes every off-center stencil weight nonnegative (positive
type).  The sup-inf equation is solved by policy iteration: freeze the
per-node argmax/argmin pair, solve the resulting linear system by
red-black relaxation sweeps, repeat until the sup-inf residual is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import const_matrix, const_scalar, const_vector
from .grids import DomainGrid, ValueField
from .model import ActionSets, GameProblem

__all__ = [
    "SolveConfig",
    "PucciParams",
    "RateReport",
    "h_mono",
    "discrete_L",
    "evaluate_H",
    "evaluate_P",
    "solve_isaacs",
    "solve_penalized",
    "extend_problem",
    "convergence_study",
    "IsaacsSolver",
    "PenalizedSolver",
]


@dataclass(frozen=True)
class SolveConfig:
    max_policy_iters: int = 80
    inner_tol: float = 1e-10
    residual_tol: float = 1e-8
    relaxation: float = 1.8
    max_inner_sweeps: int = 200_000

    def __post_init__(self):
        if self.inner_tol <= 0 or self.residual_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.relaxation < 2):
            raise ValueError("relaxation factor must lie in (0, 2)")


@dataclass(frozen=True)
class PucciParams:
    """Finite-ray realization of the extremal curvature operator.

    Each ray is a constant-coefficient linear operator (a, b, c); the
    operator value is the max over rays, which is positive-homogeneous of
    degree one by construction.
    """

    delta_hat: float
    gradient_bound: float
    zero_order: float
    rays: tuple[tuple[np.ndarray, np.ndarray, float], ...]

    @staticmethod
    def build(
        d: int,
        delta_hat: float,
        gradient_bound: float = 0.0,
        zero_order: float = 0.0,
        n_rotations: int = 16,
    ) -> "PucciParams":
        if not (0 < delta_hat < 1):
            raise ValueError("delta_hat must lie in (0, 1)")
        if zero_order < 0:
            raise ValueError("zero-order coefficient must be nonnegative")
        lo, hi = delta_hat, 1.0 / delta_hat
        mats: list[np.ndarray] = []
        if d == 1:
            mats = [np.array([[lo]]), np.array([[hi]])]
        elif d == 2:
            for k in range(n_rotations):
                th = math.pi * k / n_rotations
                q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
                for l1 in (lo, hi):
                    for l2 in (lo, hi):
                        mats.append(q @ np.diag([l1, l2]) @ q.T)
        else:
            raise ValueError("curvature-penalty rays are provided for d <= 2 only")
        dirs: list[np.ndarray] = [np.zeros(d)]
        if gradient_bound > 0:
            if d == 1:
                dirs = [np.array([gradient_bound]), np.array([-gradient_bound])]
            else:
                dirs = []
                for k in range(2 * max(n_rotations // 2, 2)):
                    th = 2 * math.pi * k / (2 * max(n_rotations // 2, 2))
                    dirs.append(gradient_bound * np.array([math.cos(th), math.sin(th)]))
        rays = tuple((a.copy(), bd.copy(), float(zero_order)) for a in mats for bd in dirs)
        return PucciParams(delta_hat, gradient_bound, zero_order, rays)


def h_mono(problem: GameProblem) -> float:
    """Conservative spacing bound keeping the stencil of positive type."""
    if problem.K0 <= 0:
        return math.inf
    return 2.0 * problem.delta / problem.K0


class _Stencil:
    """Neighbor index arrays over interior nodes, shared by all operators."""

    def __init__(self, grid: DomainGrid):
        self.grid = grid
        self.idx = grid.interior_idx
        d = grid.d
        self.ip = [grid.axis_neighbors(self.idx, i)[0] for i in range(d)]
        self.im = [grid.axis_neighbors(self.idx, i)[1] for i in range(d)]
        self.pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        self.diag = {}
        for (i, j) in self.pairs:
            self.diag[(i, j)] = grid.diagonal_neighbors(self.idx, i, j)

    def weights(self, a: np.ndarray, bvec: np.ndarray, cvec: np.ndarray):
        """Positive-type stencil weights for per-node coefficients.

        a: (m, d, d), bvec: (m, d), cvec: (m,).  Returns (center, wplus,
        wminus, wdiag) where wdiag maps (i, j) -> (w_pp_mm, w_pm_mp).
        Raises if any off-center weight would be negative.
        """
        g = self.grid
        h = g.spacing
        m = len(self.idx)
        d = g.d
        center = np.zeros(m)
        wplus = np.zeros((d, m))
        wminus = np.zeros((d, m))
        wdiag = {}
        cross_drain = np.zeros((d, m))  # sum_j |a_ij|/(h_i h_j), removed from axis weights
        for (i, j) in self.pairs:
            aij = a[:, i, j]
            w = np.abs(aij) / (h[i] * h[j])
            pos = aij >= 0
            wdiag[(i, j)] = (np.where(pos, w, 0.0), np.where(pos, 0.0, w))
            center += 2.0 * w
            cross_drain[i] += w
            cross_drain[j] += w
        for i in range(d):
            aii = a[:, i, i]
            bp = np.maximum(bvec[:, i], 0.0)
            bm = np.maximum(-bvec[:, i], 0.0)
            wplus[i] = aii / h[i] ** 2 + bp / h[i] - cross_drain[i]
            wminus[i] = aii / h[i] ** 2 + bm / h[i] - cross_drain[i]
            center -= 2.0 * aii / h[i] ** 2 + (bp + bm) / h[i]
        center -= cvec
        eps = -1e-12 * float(np.max(np.abs(center)) + 1.0)
        if (wplus < eps).any() or (wminus < eps).any():
            raise ValueError(
                "stencil loses positive type: mixed second-derivative terms "
                "dominate a diagonal entry; refine the coefficients or delta_hat"
            )
        return center, np.maximum(wplus, 0.0), np.maximum(wminus, 0.0), wdiag

    def apply(self, weights, u: np.ndarray) -> np.ndarray:
        """L u on interior nodes for a full-lattice value array ``u``."""
        center, wplus, wminus, wdiag = weights
        out = center * u[self.idx]
        for i in range(self.grid.d):
            out += wplus[i] * u[self.ip[i]] + wminus[i] * u[self.im[i]]
        for (i, j), (w_main, w_anti) in wdiag.items():
            pp, mm, pm, mp = self.diag[(i, j)]
            out += w_main * (u[pp] + u[mm]) + w_anti * (u[pm] + u[mp])
        return out


class _PairData:
    """Per-action-pair stencil weights and running cost on interior nodes."""

    def __init__(self, problem: GameProblem, grid: DomainGrid, stencil: _Stencil):
        pts = grid.coords[stencil.idx]
        self.weights = []
        self.fvals = []
        for ia in range(problem.n_alpha_ext):
            wrow, frow = [], []
            for ib in range(problem.n_beta):
                s = problem.sigma[ia][ib](pts)
                a = 0.5 * np.einsum("nij,nkj->nik", s, s)
                bvec = problem.b[ia][ib](pts)
                cvec = problem.c[ia][ib](pts)
                wrow.append(stencil.weights(a, bvec, cvec))
                frow.append(problem.f[ia][ib](pts))
            self.weights.append(wrow)
            self.fvals.append(frow)

    def hamiltonians(self, stencil: _Stencil, u: np.ndarray) -> np.ndarray:
        """L^{ab} u + f^{ab} on interior nodes, shape (nA, nB, m)."""
        return np.stack(
            [
                np.stack(
                    [stencil.apply(w, u) + f for w, f in zip(wrow, frow)],
                    axis=0,
                )
                for wrow, frow in zip(self.weights, self.fvals)
            ],
            axis=0,
        )


def _check_spacing(problem: GameProblem, grid: DomainGrid) -> None:
    hmax = float(np.max(grid.spacing))
    bound = h_mono(problem)
    if hmax > bound * (1 + 1e-12):
        raise ValueError(
            f"grid spacing {hmax:.4g} exceeds the monotonicity bound {bound:.4g}"
        )


def discrete_L(problem: GameProblem, ia: int, ib: int, u: ValueField, node: int) -> float:
    """Monotone discretization of the linear operator at one interior node."""
    grid = u.grid
    if not grid.interior[node]:
        raise ValueError(f"node {node} is not interior")
    _check_spacing(problem, grid)
    stencil = _Stencil(grid)
    pos = np.searchsorted(stencil.idx, node)
    x = grid.coords[node][None, :]
    s = problem.sigma[ia][ib](x)
    a = 0.5 * np.einsum("nij,nkj->nik", s, s)
    bvec = problem.b[ia][ib](x)
    cvec = problem.c[ia][ib](x)
    sub = _SingleNodeStencil(stencil, pos)
    w = sub.weights(a, bvec, cvec)
    return float(sub.apply(w, u.values)[0])


class _SingleNodeStencil(_Stencil):
    """View of a stencil restricted to one interior node."""

    def __init__(self, base: _Stencil, pos: int):
        self.grid = base.grid
        self.idx = base.idx[pos : pos + 1]
        self.ip = [arr[pos : pos + 1] for arr in base.ip]
        self.im = [arr[pos : pos + 1] for arr in base.im]
        self.pairs = base.pairs
        self.diag = {k: tuple(arr[pos : pos + 1] for arr in v) for k, v in base.diag.items()}


def evaluate_H(problem: GameProblem, u: ValueField) -> ValueField:
    """Sup over alpha of the inf over beta of L u + f; zero on the boundary."""
    grid = u.grid
    _check_spacing(problem, grid)
    stencil = _Stencil(grid)
    pairs = _PairData(problem, grid, stencil)
    ham = pairs.hamiltonians(stencil, u.values)[: problem.n_alpha]
    hvals = ham.min(axis=1).max(axis=0)
    out = ValueField.zeros(grid)
    out.values[stencil.idx] = hvals
    return out


def _pucci_problem(pucci: PucciParams, d: int, d1: int, template: GameProblem) -> GameProblem:
    """Wrap the ray set as a one-beta game so the stencil code can run it."""
    actions = ActionSets(tuple(f"ray{i}" for i in range(len(pucci.rays))), ("b0",))
    sigma, bb, cc, ff = [], [], [], []
    for a, bd, c0 in pucci.rays:
        s = _matrix_sqrt(2.0 * a, d1)
        sigma.append((const_matrix(s),))
        bb.append((const_vector(bd),))
        cc.append((const_scalar(c0),))
        ff.append((const_scalar(0.0),))
    return GameProblem(
        actions=actions,
        domain=template.domain,
        sigma=tuple(sigma),
        b=tuple(bb),
        c=tuple(cc),
        f=tuple(ff),
        g=const_scalar(0.0),
        K0=template.K0,
        delta=min(template.delta, pucci.delta_hat),
        delta1=template.delta1,
        K1=template.K1,
        d=d,
        d1=d1,
    )


def _matrix_sqrt(m: np.ndarray, d1: int) -> np.ndarray:
    """Symmetric psd square root, zero-padded to d x d1 columns."""
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    root = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
    d = m.shape[0]
    out = np.zeros((d, d1))
    out[:, :d] = root
    return out


def evaluate_P(pucci: PucciParams, u: ValueField, problem: GameProblem | None = None) -> ValueField:
    """Max over the ray set of the constant-coefficient operators applied to u."""
    grid = u.grid
    stencil = _Stencil(grid)
    pts = grid.coords[stencil.idx]
    best = None
    for a, bd, c0 in pucci.rays:
        m = len(stencil.idx)
        aa = np.broadcast_to(a, (m, grid.d, grid.d))
        bb = np.broadcast_to(bd, (m, grid.d))
        cc = np.full(m, c0)
        w = stencil.weights(aa, bb, cc)
        val = stencil.apply(w, u.values)
        best = val if best is None else np.maximum(best, val)
    out = ValueField.zeros(grid)
    out.values[stencil.idx] = best
    return out


class _PolicyIterationCore:
    """Shared machinery: assemble per-pair data once, iterate policies."""

    def __init__(self, problem: GameProblem, grid: DomainGrid, cfg: SolveConfig):
        _check_spacing(problem, grid)
        self.problem = problem
        self.grid = grid
        self.cfg = cfg
        self.stencil = _Stencil(grid)
        self.pairs = _PairData(problem, grid, self.stencil)
        lattice_par = np.zeros(grid.n_nodes, dtype=int)
        rem = np.arange(grid.n_nodes)
        for i in range(grid.d):
            k = rem // grid.strides[i]
            rem = rem - k * grid.strides[i]
            lattice_par += k
        par = lattice_par[self.stencil.idx] % 2
        self.colors = [np.flatnonzero(par == 0), np.flatnonzero(par == 1)]

    def solve(self, g_boundary) -> tuple[ValueField, np.ndarray, np.ndarray, float, int]:
        grid, cfg = self.grid, self.cfg
        u = ValueField.from_function(grid, g_boundary)
        na = self.problem.n_alpha_ext
        idx = self.stencil.idx
        residual = math.inf
        ia_pol = np.zeros(len(idx), dtype=int)
        ib_pol = np.zeros(len(idx), dtype=int)
        for it in range(1, cfg.max_policy_iters + 1):
            ham = self.pairs.hamiltonians(self.stencil, u.values)
            per_alpha_min = ham.min(axis=1)
            ib_per_alpha = ham.argmin(axis=1)
            hvals = per_alpha_min.max(axis=0)
            residual = float(np.max(np.abs(hvals)))
            if residual <= cfg.residual_tol:
                return u, ia_pol, ib_pol, residual, it - 1
            ia_pol = per_alpha_min.argmax(axis=0)
            cols = np.arange(len(idx))
            ib_pol = ib_per_alpha[ia_pol, cols]
            self._linear_solve(u.values, ia_pol, ib_pol)
        ham = self.pairs.hamiltonians(self.stencil, u.values)
        residual = float(np.max(np.abs(ham.min(axis=1).max(axis=0))))
        if residual <= cfg.residual_tol:
            return u, ia_pol, ib_pol, residual, cfg.max_policy_iters
        raise RuntimeError(
            f"policy iteration did not converge: residual {residual:.3g} "
            f"after {cfg.max_policy_iters} iterations"
        )

    def _linear_solve(self, u: np.ndarray, ia_pol: np.ndarray, ib_pol: np.ndarray) -> None:
        """Relaxation sweeps on the frozen-policy linear system, in place."""
        cfg = self.cfg
        idx = self.stencil.idx
        m = len(idx)
        d = self.grid.d
        pair_id = ia_pol * self.problem.n_beta + ib_pol
        center = np.zeros(m)
        wplus = np.zeros((d, m))
        wminus = np.zeros((d, m))
        fpol = np.zeros(m)
        wdiag_pol = {
            key: (np.zeros(m), np.zeros(m)) for key in self.stencil.diag
        }
        for ia in range(self.problem.n_alpha_ext):
            for ib in range(self.problem.n_beta):
                sel = pair_id == ia * self.problem.n_beta + ib
                if not sel.any():
                    continue
                c0, wp, wm, wd = self.pairs.weights[ia][ib]
                center[sel] = c0[sel]
                wplus[:, sel] = wp[:, sel]
                wminus[:, sel] = wm[:, sel]
                fpol[sel] = self.pairs.fvals[ia][ib][sel]
                for key, (w1, w2) in wd.items():
                    wdiag_pol[key][0][sel] = w1[sel]
                    wdiag_pol[key][1][sel] = w2[sel]
        weights = (center, wplus, wminus, wdiag_pol)
        omega = cfg.relaxation
        prev_res = math.inf
        for sweep in range(cfg.max_inner_sweeps):
            for color in self.colors:
                res_c = self.stencil.apply(weights, u)[color] + fpol[color]
                u[idx[color]] += omega * res_c / (-center[color])
            res = float(np.max(np.abs(self.stencil.apply(weights, u) + fpol)))
            if res <= cfg.inner_tol:
                return
            if sweep % 50 == 49:
                if res > prev_res and omega > 1.0:
                    omega = max(1.0, 0.5 * (omega + 1.0))
                prev_res = res
        raise RuntimeError("inner relaxation did not reach tolerance")


def solve_isaacs(
    problem: GameProblem,
    g_boundary=None,
    cfg: SolveConfig = SolveConfig(),
    h: float = 1 / 128,
    grid: DomainGrid | None = None,
) -> ValueField:
    """Solve the sup-inf equation with Dirichlet data; see IsaacsSolver."""
    solver = IsaacsSolver(h=h, cfg=cfg)
    solver.fit(problem, g_boundary, grid=grid)
    return solver.value_


class _ParamsMixin:
    """Minimal scikit-learn-compatible parameter handling."""

    _param_names: tuple[str, ...] = ()

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class IsaacsSolver(_ParamsMixin):
    """Estimator-style wrapper: fit a game problem, predict interpolated values.

    After ``fit`` the solved grid function is in ``value_``, the final
    per-node saddle policy in ``policy_alpha_`` / ``policy_beta_`` (indexed
    like the interior nodes), the sup-inf residual in ``residual_``.
    """

    _param_names = ("h", "cfg")

    def __init__(self, h: float = 1 / 128, cfg: SolveConfig = SolveConfig()):
        self.h = h
        self.cfg = cfg

    def fit(self, problem: GameProblem, g_boundary=None, grid: DomainGrid | None = None):
        if grid is None:
            grid = DomainGrid.build(problem.domain, self.h)
        if g_boundary is None:
            g_boundary = problem.g
        core = _PolicyIterationCore(problem, grid, self.cfg)
        u, ia_pol, ib_pol, residual, iters = core.solve(g_boundary)
        # boundary ring carries the Dirichlet data exactly
        u.values[grid.boundary_idx] = np.asarray(g_boundary(grid.coords[grid.boundary_idx]))
        self.problem_ = problem
        self.grid_ = grid
        self.value_ = u
        self.policy_alpha_ = ia_pol
        self.policy_beta_ = ib_pol
        self.residual_ = residual
        self.n_iter_ = iters
        return self

    def predict(self, x) -> np.ndarray:
        return self.value_.interpolate(x)


class PenalizedSolver(_ParamsMixin):
    """Solver for the curvature-penalized equation max(H[u], P[u] - K) = 0.

    Realized as the plain sup-inf solver over the action set extended by
    one penalty action per ray, each carrying the ray's constant
    coefficients and running cost -K.
    """

    _param_names = ("K", "pucci", "h", "cfg")

    def __init__(
        self,
        K: float,
        pucci: PucciParams,
        h: float = 1 / 128,
        cfg: SolveConfig = SolveConfig(),
    ):
        self.K = K
        self.pucci = pucci
        self.h = h
        self.cfg = cfg

    def fit(self, problem: GameProblem, g_boundary=None, grid: DomainGrid | None = None):
        if self.K < 0:
            raise ValueError("penalty constant K must be nonnegative")
        ext = extend_problem(problem, self.pucci, self.K)
        inner = IsaacsSolver(h=self.h, cfg=self.cfg)
        inner.fit(ext, g_boundary if g_boundary is not None else problem.g, grid=grid)
        self.problem_ = problem
        self.grid_ = inner.grid_
        self.value_ = inner.value_
        self.policy_alpha_ = inner.policy_alpha_
        self.policy_beta_ = inner.policy_beta_
        self.residual_ = inner.residual_
        self.n_iter_ = inner.n_iter_
        return self

    def predict(self, x) -> np.ndarray:
        return self.value_.interpolate(x)


def solve_penalized(
    problem: GameProblem,
    pucci: PucciParams,
    K: float,
    g_boundary=None,
    cfg: SolveConfig = SolveConfig(),
    h: float = 1 / 128,
    grid: DomainGrid | None = None,
) -> ValueField:
    solver = PenalizedSolver(K=K, pucci=pucci, h=h, cfg=cfg)
    solver.fit(problem, g_boundary, grid=grid)
    return solver.value_


def extend_problem(problem: GameProblem, pucci: PucciParams, K: float) -> GameProblem:
    """Append one penalty action per ray; their coefficients ignore beta and x."""
    if problem.actions.n_alpha2:
        raise ValueError("problem already carries penalty actions")
    nb = problem.n_beta
    a2_labels = tuple(f"pen{i}" for i in range(len(pucci.rays)))
    actions = ActionSets(problem.actions.a_labels, problem.actions.b_labels, a2_labels)
    sigma = list(problem.sigma)
    bb = list(problem.b)
    cc = list(problem.c)
    ff = list(problem.f)
    for a, bd, c0 in pucci.rays:
        s = _matrix_sqrt(2.0 * a, problem.d1)
        sigma.append(tuple(const_matrix(s) for _ in range(nb)))
        bb.append(tuple(const_vector(bd) for _ in range(nb)))
        cc.append(tuple(const_scalar(c0) for _ in range(nb)))
        ff.append(tuple(const_scalar(-K) for _ in range(nb)))
    return GameProblem(
        actions=actions,
        domain=problem.domain,
        sigma=tuple(sigma),
        b=tuple(bb),
        c=tuple(cc),
        f=tuple(ff),
        g=problem.g,
        K0=problem.K0,
        delta=min(problem.delta, pucci.delta_hat),
        delta1=problem.delta1,
        K1=problem.K1,
        d=problem.d,
        d1=problem.d1,
    )


@dataclass
class RateReport:
    """Sup-norm gap between penalized and unpenalized solutions per K."""

    K_values: list[float]
    sup_errors: list[float]
    fitted_chi: float
    fitted_N: float

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("K,sup_error\n")
            for k, e in zip(self.K_values, self.sup_errors):
                fh.write(f"{k:.17g},{e:.17g}\n")
            fh.write(f"# fitted_N,{self.fitted_N:.17g},fitted_chi,{self.fitted_chi:.17g}\n")


def convergence_study(
    problem: GameProblem,
    pucci: PucciParams,
    g_boundary,
    K_list,
    cfg: SolveConfig = SolveConfig(),
    h: float = 1 / 128,
) -> RateReport:
    """Gap e(K) = sup|u_K - v| against the penalty constant, with a decay fit."""
    K_list = list(K_list)
    if any(k < 1 for k in K_list) or sorted(K_list) != K_list:
        raise ValueError("K_list must be increasing and at least 1")
    grid = DomainGrid.build(problem.domain, h)
    v_ref = solve_isaacs(problem, g_boundary, cfg, grid=grid)
    errs = []
    for K in K_list:
        u_K = solve_penalized(problem, pucci, K, g_boundary, cfg, grid=grid)
        errs.append(u_K.sup_diff(v_ref))
    floor = 10.0 * cfg.residual_tol
    usable = [(k, e) for k, e in zip(K_list, errs) if e > floor]
    if len(usable) >= 2:
        lk = np.log([k for k, _ in usable])
        le = np.log([e for _, e in usable])
        slope, intercept = np.polyfit(lk, le, 1)
        chi = float(-slope)
        n_hat = float(np.exp(intercept))
    else:
        chi = math.inf
        n_hat = 0.0
    return RateReport(K_list, errs, chi, n_hat)
