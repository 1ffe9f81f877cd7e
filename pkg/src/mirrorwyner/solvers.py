"""The two optimization procedures: a greedy coordinate-ascent loop over twin
assignments, and a dogleg trust-region method on a finite-difference model,
plus the Monte Carlo chance estimator both consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import mirror
from .errors import NumericError, ValidationError
from .prob import Pmf, PrivacyMapping

RADIUS_EQ_TOL = 1e-12  # "step hit the boundary" test for radius expansion


@dataclass(frozen=True)
class TrustRegionConfig:
    eta1: float = 0.1
    eta2: float = 0.75
    theta1: float = 0.5
    theta2: float = 2.0
    delta0: float = 1.0
    eps_th: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if not 0 < self.eta1 < self.eta2 < 1:
            raise ValidationError("TrustRegionConfig: need 0 < eta1 < eta2 < 1")
        if not 0 < self.theta1 < 1 < self.theta2:
            raise ValidationError("TrustRegionConfig: need 0 < theta1 < 1 < theta2")
        if self.delta0 <= 0 or self.eps_th <= 0 or self.max_iter < 1:
            raise ValidationError("TrustRegionConfig: delta0, eps_th, max_iter must be positive")


@dataclass(frozen=True)
class Iterate:
    point: np.ndarray
    objective: float
    grad_norm: float
    radius: float
    ratio: Optional[float]
    accepted: bool


@dataclass
class SolveTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    feasible: Optional[bool] = None

    def __len__(self):
        return len(self.iterates)

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def csv_lines(self):
        yield "iter,objective,grad_norm,radius,ratio,accepted"
        for m, it in enumerate(self.iterates):
            ratio = "" if it.ratio is None else f"{it.ratio:.12g}"
            yield (f"{m},{it.objective:.12g},{it.grad_norm:.12g},"
                   f"{it.radius:.12g},{ratio},{int(it.accepted)}")


@dataclass
class ObjectiveFn:
    """Real-vector objective with optional analytic gradient; missing
    derivatives fall back to central differences with step h."""

    fn: Callable[[np.ndarray], float]
    dim: int
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h: float = 1e-5

    def __post_init__(self):
        if self.dim < 1 or self.h <= 0:
            raise ValidationError("ObjectiveFn: dim >= 1 and h > 0 required")

    def value(self, x: np.ndarray) -> float:
        return float(self.fn(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        g = np.zeros(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = self.h
            g[i] = (self.fn(x + e) - self.fn(x - e)) / (2 * self.h)
        return g

    def hessian(self, x: np.ndarray) -> np.ndarray:
        n, h = self.dim, self.h
        hess = np.zeros((n, n))
        f0 = self.fn(x)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            hess[i, i] = (self.fn(x + ei) - 2 * f0 + self.fn(x - ei)) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = h
                hess[i, j] = hess[j, i] = (
                    self.fn(x + ei + ej) - self.fn(x + ei - ej)
                    - self.fn(x - ei + ej) + self.fn(x - ei - ej)
                ) / (4 * h**2)
        return hess


def _dogleg_step(g: np.ndarray, hess: np.ndarray, delta: float) -> np.ndarray:
    """Approximate argmin of the quadratic model within ||step|| <= delta."""
    gBg = float(g @ hess @ g)
    # Cauchy point along -g
    if gBg > 0:
        t_cauchy = min(float(g @ g) / gBg, delta / np.linalg.norm(g))
    else:
        t_cauchy = delta / np.linalg.norm(g)
    p_cauchy = -t_cauchy * g
    try:
        lo = np.linalg.cholesky(hess)
        p_newton = -np.linalg.solve(hess, g)
    except np.linalg.LinAlgError:
        return p_cauchy
    if np.linalg.norm(p_newton) <= delta:
        return p_newton
    if np.linalg.norm(p_cauchy) >= delta - RADIUS_EQ_TOL:
        return p_cauchy * (delta / np.linalg.norm(p_cauchy))
    # walk the dogleg segment from the Cauchy point toward Newton to the boundary
    d = p_newton - p_cauchy
    a = float(d @ d)
    b = 2 * float(p_cauchy @ d)
    c = float(p_cauchy @ p_cauchy) - delta**2
    s = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return p_cauchy + s * d


def trust_region_solve(f: ObjectiveFn, x0, cfg: TrustRegionConfig = None):
    """Dogleg trust-region minimization with the exact accept/radius rules:
    accept iff ratio > eta1; shrink to theta1*||step|| when ratio <= eta1;
    expand to theta2*radius when ratio > eta2 and the step hit the boundary."""
    cfg = cfg or TrustRegionConfig()
    x = np.asarray(x0, dtype=float).copy()
    if x.size != f.dim:
        raise ValidationError("trust_region_solve: x0 dimension mismatch")
    trace = SolveTrace()
    delta = cfg.delta0
    fx = f.value(x)
    for _ in range(cfg.max_iter):
        g = f.gradient(x)
        if not (np.all(np.isfinite(g)) and np.isfinite(fx)):
            raise NumericError("non-finite objective or gradient", partial=trace)
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.eps_th:
            trace.converged = True
            break
        hess = f.hessian(x)
        step = _dogleg_step(g, hess, delta)
        step_norm = float(np.linalg.norm(step))
        predicted = -(float(g @ step) + 0.5 * float(step @ hess @ step))
        f_trial = f.value(x + step)
        if predicted > 0 and np.isfinite(f_trial):
            ratio = (fx - f_trial) / predicted
        else:
            ratio = -np.inf
        accepted = ratio > cfg.eta1
        trace.iterates.append(Iterate(x.copy(), fx, gnorm, delta, ratio, accepted))
        if accepted:
            x = x + step
            fx = f_trial
        if ratio <= cfg.eta1:
            delta = cfg.theta1 * step_norm
        elif ratio > cfg.eta2 and abs(step_norm - delta) <= RADIUS_EQ_TOL:
            delta = cfg.theta2 * delta
        if delta <= 0 or not np.isfinite(delta):
            raise NumericError("trust-region radius collapsed", partial=trace)
    else:
        trace.converged = float(np.linalg.norm(f.gradient(x))) < cfg.eps_th
    return x, trace


def estimate_chance(predicate: Callable[[np.random.Generator], bool],
                    u: mirror.UncertaintyModel, n: int, seed: int = None):
    """Monte Carlo estimate of Pr{predicate} over n i.i.d. sampled worlds.

    Returns (estimate, 95% CI half-width via the normal approximation).
    """
    if n < 1:
        raise ValidationError("estimate_chance: need n >= 1")
    rng = np.random.default_rng(u.seed if seed is None else seed)
    hits = sum(bool(predicate(rng)) for _ in range(n))
    p = hits / n
    half = 1.96 * np.sqrt(p * (1 - p) / n)
    return p, half


# ---------------------------------------------------------------------------
# Greedy coordinate ascent over twin assignments
# ---------------------------------------------------------------------------

DEFAULT_EPS = (0.01, 0.01, 0.01)
DEFAULT_LAMBDA = 10.0


def _random_mapping(n_in: int, n_out: int, rng: np.random.Generator) -> PrivacyMapping:
    return PrivacyMapping(rng.dirichlet(np.ones(n_out), size=n_in))


def _nudge_mapping(m: PrivacyMapping, scale: float, rng: np.random.Generator) -> PrivacyMapping:
    rows = m.rows + scale * rng.normal(size=m.rows.shape)
    rows = np.clip(rows, 1e-9, None)
    return PrivacyMapping(rows / rows.sum(axis=1, keepdims=True))


def random_assignment(inst: mirror.MirrorGameInstance,
                      rng: np.random.Generator) -> mirror.TwinAssignment:
    originals, virtuals = [], []
    for q in range(inst.q_count):
        nx = inst.joints[q].table.shape[1]
        originals.append(_random_mapping(nx, nx, rng))
        virtuals.append(_random_mapping(nx, inst.virtual_alphabet, rng))
    return mirror.TwinAssignment(tuple(originals), tuple(virtuals))


class _Merit:
    """Minimization merit: mean exposure plus weighted constraint violations."""

    def __init__(self, inst, relaxed, eps, lam, gamma2_eff):
        self.inst = inst
        self.relaxed = relaxed
        self.eps = eps
        self.lam = lam
        self.gamma2_eff = gamma2_eff

    def __call__(self, vals: np.ndarray) -> float:
        inst = self.inst
        e1, e2, e3 = self.eps
        v = np.zeros_like(vals)
        v[:, 0] = np.maximum(0.0, self.gamma2_eff - vals[:, 0])
        v[:, 1] = np.maximum(0.0, vals[:, 1] - inst.gamma0)
        v[:, 2] = np.maximum(0.0, vals[:, 2] - inst.gamma3)
        v[:, 3] = np.maximum(0.0, vals[:, 3] - inst.gamma1)
        if self.relaxed:
            v[:, 4] = np.maximum(0.0, e1 - vals[:, 4])
            v[:, 5] = np.maximum(0.0, e2 - vals[:, 5])
            v[:, 6] = np.maximum(0.0, e3 - vals[:, 6])
        else:
            v[:, 4] = np.maximum(0.0, mirror.NULL_TOL - vals[:, 4])
            v[:, 5] = np.maximum(0.0, mirror.NULL_TOL - vals[:, 5])
            v[:, 6] = np.maximum(0.0, vals[:, 6] - mirror.NULL_TOL)
        return float(vals[:, 2].mean() + self.lam * v.sum())

    def feasible(self, vals: np.ndarray) -> bool:
        inst = self.inst
        e1, e2, e3 = self.eps
        tol = mirror.NULL_TOL
        ok = (
            (vals[:, 0] >= self.gamma2_eff - tol)
            & (vals[:, 1] <= inst.gamma0 + tol)
            & (vals[:, 2] <= inst.gamma3 + tol)
            & (vals[:, 3] <= inst.gamma1 + tol)
        )
        if self.relaxed:
            ok &= (vals[:, 4] > e1) & (vals[:, 5] > e2) & (vals[:, 6] >= e3)
        else:
            ok &= (vals[:, 4] > tol) & (vals[:, 5] > tol) & (vals[:, 6] <= tol)
        return bool(ok.all())


def greedy_solve(inst: mirror.MirrorGameInstance, u: mirror.UncertaintyModel,
                 relaxed: bool, budget: int, seed: int,
                 omega: float = 1.0, eps=DEFAULT_EPS, lam: float = DEFAULT_LAMBDA,
                 proposals: int = 6, patience: int = 3):
    """Per-Bob coordinate ascent: re-derive the original mapping through the
    Boltzmann-posterior self-consistent update, then adjust the virtual
    mapping toward feasibility; accept a step only when the merit improves.

    With relaxed=True the feasibility tests use the eps floors (including the
    flipped null condition) and the bottleneck pair search shortcut for the
    utility floor. Stops on feasibility with no further improvement, on a run
    of improvement-free passes, or at the budget.
    """
    if budget < 1:
        raise ValidationError("greedy_solve: budget must be >= 1")
    rng = np.random.default_rng(seed)
    asg = random_assignment(inst, rng)
    trace = SolveTrace()

    vals = mirror.condition_values(inst, asg)
    gamma2_eff = inst.gamma2
    if relaxed:
        bn = mirror.bottleneck_pair_search(inst, asg, u, vtheta_target=0.9)
        gamma2_eff = min(inst.gamma2, bn.gamma2_star)
    merit = _Merit(inst, relaxed, eps, lam, gamma2_eff)
    current = merit(vals)
    stall = 0
    for _ in range(budget):
        improved = False
        for q in range(inst.q_count):
            candidates = []
            # Boltzmann self-consistent refresh of the original mapping
            try:
                j3 = mirror.prob.markov_compose(inst.joints[q], asg.original[q])
                sy = j3.margin_ac().table
                p_y = sy.sum(axis=0)
                post = np.where(p_y[None, :] > 0,
                                sy / np.where(p_y > 0, p_y, 1.0), 0.0).T
                p_x = inst.x_marginal(q)
                x_given_y = mirror.boltzmann_posterior(
                    p_x, inst.s_given_x(q), PrivacyMapping(post), omega)
                rows = (x_given_y.rows * p_y[:, None]).T
                rows = np.where(p_x.probs[:, None] > 0,
                                rows / np.where(p_x.probs[:, None] > 0,
                                                p_x.probs[:, None], 1.0),
                                1.0 / rows.shape[1])
                rows = np.clip(rows, 0.0, None)
                rows /= rows.sum(axis=1, keepdims=True)
                candidates.append(("original", PrivacyMapping(rows)))
            except Exception:
                pass
            candidates.append(("original", _nudge_mapping(asg.original[q], 0.1, rng)))
            for j in range(proposals):
                if j % 2 == 0:
                    cand = _random_mapping(asg.virtual[q].input_size,
                                           inst.virtual_alphabet, rng)
                else:
                    cand = _nudge_mapping(asg.virtual[q], 0.15, rng)
                candidates.append(("virtual", cand))
            for kind, cand in candidates:
                if kind == "original":
                    trial = mirror.TwinAssignment(
                        asg.original[:q] + (cand,) + asg.original[q + 1:], asg.virtual)
                else:
                    trial = mirror.TwinAssignment(
                        asg.original, asg.virtual[:q] + (cand,) + asg.virtual[q + 1:])
                trial_vals = mirror.condition_values(inst, trial)
                trial_merit = merit(trial_vals)
                if trial_merit < current - 1e-9:
                    asg, vals, current = trial, trial_vals, trial_merit
                    improved = True
        trace.iterates.append(Iterate(
            point=np.array([]), objective=float(vals[:, 2].mean()),
            grad_norm=current, radius=0.0, ratio=None, accepted=improved))
        feasible_now = merit.feasible(vals)
        if feasible_now and not improved:
            trace.converged = True
            break
        stall = 0 if improved else stall + 1
        if stall >= patience:
            break
    trace.feasible = merit.feasible(vals)
    return asg, trace
