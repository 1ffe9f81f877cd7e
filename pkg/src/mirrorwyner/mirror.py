"""Virtual-twin mirror game: feasibility conditions, the base optimization
problem, and its relaxation chain (chance constraints, epsilon floors,
Boltzmann posteriors, bottleneck pair search, objective decomposition).

Multi-Bob coupling model: the per-Bob non-private sources X_q are
conditionally independent given the shared private source S, and all
released messages are generated from their own X_q through row-stochastic
mappings. Every information measure below is computed exactly from that
factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import prob
from .errors import NumericUnderflowError, ValidationError
from .prob import JointPmf2, JointPmf3, Pmf, PrivacyMapping

# conditions (v)-(vii) use this as "numerically zero" in strict mode
NULL_TOL = 1e-9

CONDITION_NAMES = (
    "utility",        # (i)   I(X_q; Yo_q)
    "leakage",        # (ii)  I(Yo_q; S)
    "exposure",       # (iii) I(X_q; {Ytot_q'}), q' != q
    "virtual_power",  # (iv)  E{||Yv_q||^2}
    "twin_vs_other_original",  # (v)  I({Yv_q'}; Yo_q)
    "twin_vs_other_source",    # (vi) I({Yv_q'}; X_q)
    "twin_nulled",    # (vii) I({Yv_q}; Yo_q)
)


@dataclass(frozen=True)
class UncertaintyModel:
    """Multiplicative perturbation of the posterior P(S | Yo_q).

    Each posterior entry is scaled by (1 + magnitude * u), u ~ Uniform(-1, 1)
    i.i.d., then renormalized per observed symbol.
    """

    magnitude: float
    seed: int = 0
    target: str = "posterior_S_given_Y"

    def __post_init__(self):
        if not 0.0 <= self.magnitude <= 1.0:
            raise ValidationError("UncertaintyModel: magnitude must be in [0, 1]")
        if self.target != "posterior_S_given_Y":
            raise ValidationError(f"UncertaintyModel: unknown target {self.target!r}")


@dataclass(frozen=True)
class MirrorGameInstance:
    """The multi-Bob problem data: per-Bob joints P(S, X_q) and thresholds."""

    joints: tuple          # per-Bob JointPmf2 over (S, X_q)
    gamma0: np.ndarray     # per-Bob leakage ceiling, bits
    gamma1: np.ndarray     # per-Bob virtual power ceiling, squared symbol units
    gamma2: float          # utility floor, bits
    gamma3: float          # exposure ceiling, bits
    theta_levels: np.ndarray = field(default=None)  # chance targets, 7 entries in [0,1]
    symbol_values: tuple = None  # per-Bob embedding of the virtual alphabet
    virtual_alphabet: int = 2

    def __post_init__(self):
        joints = tuple(self.joints)
        object.__setattr__(self, "joints", joints)
        if len(joints) < 2:
            raise ValidationError("MirrorGameInstance: need at least 2 Bobs")
        s_ref = joints[0].marginal_a().probs
        for j in joints[1:]:
            if j.table.shape[0] != s_ref.size:
                raise ValidationError("MirrorGameInstance: S alphabet mismatch across Bobs")
            if np.max(np.abs(j.marginal_a().probs - s_ref)) > 1e-9:
                raise ValidationError("MirrorGameInstance: S marginal differs across Bobs")
        object.__setattr__(self, "gamma0", np.broadcast_to(
            np.asarray(self.gamma0, dtype=float), (len(joints),)).copy())
        object.__setattr__(self, "gamma1", np.broadcast_to(
            np.asarray(self.gamma1, dtype=float), (len(joints),)).copy())
        if np.any(self.gamma0 < 0) or np.any(self.gamma1 < 0) or self.gamma2 < 0 or self.gamma3 < 0:
            raise ValidationError("MirrorGameInstance: thresholds must be non-negative")
        theta = self.theta_levels
        theta = np.full(7, 0.9) if theta is None else np.asarray(theta, dtype=float)
        if theta.shape != (7,) or np.any(theta < 0) or np.any(theta > 1):
            raise ValidationError("MirrorGameInstance: theta_levels must be 7 reals in [0,1]")
        object.__setattr__(self, "theta_levels", theta)
        if self.virtual_alphabet < 2:
            raise ValidationError("MirrorGameInstance: virtual alphabet must have >= 2 symbols")
        if self.symbol_values is None:
            vals = tuple(np.arange(self.virtual_alphabet, dtype=float)
                         for _ in joints)
        else:
            vals = tuple(np.asarray(v, dtype=float) for v in self.symbol_values)
            for v in vals:
                if v.size != self.virtual_alphabet:
                    raise ValidationError("MirrorGameInstance: symbol_values size mismatch")
        object.__setattr__(self, "symbol_values", vals)

    @property
    def q_count(self) -> int:
        return len(self.joints)

    @property
    def source(self) -> Pmf:
        return self.joints[0].marginal_a()

    def x_marginal(self, q: int) -> Pmf:
        return self.joints[q].marginal_b()

    def x_given_s(self, q: int) -> np.ndarray:
        """P(X_q = x | S = s) as a (|S|, |X_q|) matrix (rows of zero-mass s are uniform)."""
        table = self.joints[q].table
        p_s = table.sum(axis=1, keepdims=True)
        out = np.where(p_s > 0, table / np.where(p_s > 0, p_s, 1.0),
                       1.0 / table.shape[1])
        return out

    def s_given_x(self, q: int) -> PrivacyMapping:
        table = self.joints[q].table
        p_x = table.sum(axis=0, keepdims=True)
        rows = np.where(p_x > 0, table / np.where(p_x > 0, p_x, 1.0),
                        1.0 / table.shape[0]).T
        return PrivacyMapping(rows)

    def to_jsonable(self):
        return {
            "joints": [j.to_jsonable() for j in self.joints],
            "gamma0": list(self.gamma0),
            "gamma1": list(self.gamma1),
            "gamma2": self.gamma2,
            "gamma3": self.gamma3,
            "theta_levels": list(self.theta_levels),
            "symbol_values": [list(v) for v in self.symbol_values],
            "virtual_alphabet": self.virtual_alphabet,
        }

    @classmethod
    def from_jsonable(cls, data) -> "MirrorGameInstance":
        return cls(
            joints=tuple(JointPmf2.from_jsonable(j) for j in data["joints"]),
            gamma0=np.asarray(data["gamma0"], dtype=float),
            gamma1=np.asarray(data["gamma1"], dtype=float),
            gamma2=float(data["gamma2"]),
            gamma3=float(data["gamma3"]),
            theta_levels=np.asarray(data["theta_levels"], dtype=float),
            symbol_values=tuple(np.asarray(v, dtype=float) for v in data["symbol_values"]),
            virtual_alphabet=int(data["virtual_alphabet"]),
        )


@dataclass(frozen=True)
class TwinAssignment:
    """Candidate solution: per-Bob original and virtual mappings from X_q."""

    original: tuple  # per-Bob PrivacyMapping P(Yo_q | X_q)
    virtual: tuple   # per-Bob PrivacyMapping P(Yv_q | X_q)

    def __post_init__(self):
        object.__setattr__(self, "original", tuple(self.original))
        object.__setattr__(self, "virtual", tuple(self.virtual))
        if len(self.original) != len(self.virtual):
            raise ValidationError("TwinAssignment: original/virtual count mismatch")

    def to_jsonable(self):
        return {
            "original": [m.to_jsonable() for m in self.original],
            "virtual": [m.to_jsonable() for m in self.virtual],
        }

    @classmethod
    def from_jsonable(cls, data) -> "TwinAssignment":
        return cls(
            original=tuple(PrivacyMapping.from_jsonable(m) for m in data["original"]),
            virtual=tuple(PrivacyMapping.from_jsonable(m) for m in data["virtual"]),
        )


@dataclass(frozen=True)
class ConditionReport:
    """Numeric values and pass flags for conditions (i)-(vii), per Bob."""

    values: np.ndarray   # (Q, 7)
    passed: np.ndarray   # (Q, 7) booleans
    feasible: bool

    def csv_row(self) -> str:
        cells = []
        for q in range(self.values.shape[0]):
            cells.extend(f"{v:.12g}" for v in self.values[q])
            cells.extend(str(int(p)) for p in self.passed[q])
        cells.append(str(int(self.feasible)))
        return ",".join(cells)


def _check_consistent(inst: MirrorGameInstance, asg: TwinAssignment) -> None:
    if len(asg.original) != inst.q_count:
        raise ValidationError("assignment does not match instance Bob count")
    for q in range(inst.q_count):
        nx = inst.joints[q].table.shape[1]
        if asg.original[q].input_size != nx or asg.virtual[q].input_size != nx:
            raise ValidationError(f"Bob {q}: mapping input alphabet mismatch")
        if asg.virtual[q].output_size != inst.virtual_alphabet:
            raise ValidationError(f"Bob {q}: virtual alphabet mismatch")


def _xy_joint(inst: MirrorGameInstance, mapping: PrivacyMapping, q: int) -> JointPmf2:
    """Joint of (X_q, output) for a mapping applied to X_q."""
    p_x = inst.x_marginal(q).probs
    return JointPmf2(p_x[:, None] * mapping.rows)


def _per_s_channel(inst, asg, q, keep_o=True, keep_v=True):
    """P(kept outputs of Bob q | S = s) as an (|S|, n_out) matrix."""
    x_given_s = inst.x_given_s(q)          # (S, X)
    o = asg.original[q].rows               # (X, Yo)
    v = asg.virtual[q].rows                # (X, Yv)
    if keep_o and keep_v:
        ch = o[:, :, None] * v[:, None, :]  # (X, Yo, Yv)
        ch = ch.reshape(o.shape[0], -1)
    elif keep_o:
        ch = o
    else:
        ch = v
    return x_given_s @ ch


def _others_joint_with(inst, asg, q, head, keep_o, keep_v):
    """Joint of a per-s head variable for Bob q with the kept outputs of all
    other Bobs, as a 2-D table (head, flattened others)."""
    p_s = inst.source.probs
    acc = None
    for qp in range(inst.q_count):
        if qp == q:
            continue
        blk = _per_s_channel(inst, asg, qp, keep_o=keep_o, keep_v=keep_v)  # (S, n)
        acc = blk if acc is None else (acc[:, :, None] * blk[:, None, :]).reshape(len(p_s), -1)
    table = np.einsum("s,sh,so->ho", p_s, head, acc)
    return JointPmf2(table)


def condition_values(inst: MirrorGameInstance, asg: TwinAssignment) -> np.ndarray:
    """Exact values of conditions (i)-(vii) for every Bob, as a (Q, 7) array."""
    _check_consistent(inst, asg)
    vals = np.zeros((inst.q_count, 7))
    for q in range(inst.q_count):
        p_x = inst.x_marginal(q)
        # (i) utility
        vals[q, 0] = prob.mutual_information(_xy_joint(inst, asg.original[q], q))
        # (ii) leakage
        j3 = prob.markov_compose(inst.joints[q], asg.original[q])
        vals[q, 1] = prob.mutual_information(j3.margin_ac())
        # (iii) exposure of X_q to everything the other Bobs receive
        x_given_s = inst.x_given_s(q)
        vals[q, 2] = prob.mutual_information(
            _others_joint_with(inst, asg, q, x_given_s, keep_o=True, keep_v=True))
        # (iv) virtual power
        vals[q, 3] = virtual_power(asg.virtual[q], p_x, inst.symbol_values[q])
        # (v) other Bobs' twins vs this Bob's original message
        yo_given_s = _per_s_channel(inst, asg, q, keep_o=True, keep_v=False)
        vals[q, 4] = prob.mutual_information(
            _others_joint_with(inst, asg, q, yo_given_s, keep_o=False, keep_v=True))
        # (vi) other Bobs' twins vs this Bob's source
        vals[q, 5] = prob.mutual_information(
            _others_joint_with(inst, asg, q, x_given_s, keep_o=False, keep_v=True))
        # (vii) own twin vs own original message
        own = np.einsum("x,xo,xv->ov", p_x.probs, asg.original[q].rows, asg.virtual[q].rows)
        vals[q, 6] = prob.mutual_information(JointPmf2(own))
    return vals


def condition_passes(inst: MirrorGameInstance, vals: np.ndarray) -> np.ndarray:
    passed = np.zeros_like(vals, dtype=bool)
    passed[:, 0] = vals[:, 0] >= inst.gamma2 - NULL_TOL
    passed[:, 1] = vals[:, 1] <= inst.gamma0 + NULL_TOL
    passed[:, 2] = vals[:, 2] <= inst.gamma3 + NULL_TOL
    passed[:, 3] = vals[:, 3] <= inst.gamma1 + NULL_TOL
    passed[:, 4] = vals[:, 4] > NULL_TOL
    passed[:, 5] = vals[:, 5] > NULL_TOL
    passed[:, 6] = vals[:, 6] <= NULL_TOL
    return passed


def evaluate_conditions(inst: MirrorGameInstance, asg: TwinAssignment) -> ConditionReport:
    """Check conditions (i)-(vii) exactly, with (vii) in its strict-null form."""
    vals = condition_values(inst, asg)
    passed = condition_passes(inst, vals)
    return ConditionReport(values=vals, passed=passed, feasible=bool(passed.all()))


def virtual_power(mapping: PrivacyMapping, x_marginal: Pmf, symbol_values) -> float:
    """E{||Yv||^2} with the output distribution pushed forward from X."""
    symbol_values = np.asarray(symbol_values, dtype=float)
    if symbol_values.size != mapping.output_size:
        raise ValidationError("virtual_power: one embedding value per output symbol required")
    p_y = mapping.push(x_marginal).probs
    return float(np.sum(p_y * symbol_values ** 2))


@dataclass(frozen=True)
class ConstraintSpec:
    name: str
    kind: str              # "ge", "le", "gt", "eq"
    condition_index: int
    bounds: np.ndarray     # per-Bob bound

    def satisfied(self, value: float, q: int, tol: float = NULL_TOL) -> bool:
        b = self.bounds[q]
        if self.kind == "ge":
            return value >= b - tol
        if self.kind == "le":
            return value <= b + tol
        if self.kind == "gt":
            return value > b + tol
        return abs(value - b) <= tol


@dataclass(frozen=True)
class OptimizationProblem:
    """Structured form of the base problem: one exposure-minimizing objective
    plus six constraint slots, all bounds wired to the instance thresholds."""

    instance: MirrorGameInstance
    objective_pairs: tuple   # (q, q') enumeration with q' != q
    constraints: tuple       # six ConstraintSpec slots

    def objective(self, asg: TwinAssignment) -> float:
        """Mean exposure over Bobs: I(X_q; {Ytot_q'}), q' != q."""
        vals = condition_values(self.instance, asg)
        return float(vals[:, 2].mean())

    def constraint_values(self, asg: TwinAssignment) -> np.ndarray:
        return condition_values(self.instance, asg)


def assemble_p1(inst: MirrorGameInstance) -> OptimizationProblem:
    q_range = range(inst.q_count)
    pairs = tuple((q, qp) for q in q_range for qp in q_range if qp != q)
    zeros = np.zeros(inst.q_count)
    constraints = (
        ConstraintSpec("utility", "ge", 0, np.full(inst.q_count, inst.gamma2)),
        ConstraintSpec("leakage", "le", 1, inst.gamma0.copy()),
        ConstraintSpec("virtual_power", "le", 3, inst.gamma1.copy()),
        ConstraintSpec("twin_vs_other_original", "gt", 4, zeros.copy()),
        ConstraintSpec("twin_vs_other_source", "gt", 5, zeros.copy()),
        ConstraintSpec("twin_nulled", "eq", 6, zeros.copy()),
    )
    return OptimizationProblem(instance=inst, objective_pairs=pairs, constraints=constraints)


def perturb_posterior(posterior: np.ndarray, magnitude: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Scale each entry by (1 + magnitude * Uniform(-1,1)), renormalize rows."""
    noise = 1.0 + magnitude * rng.uniform(-1.0, 1.0, size=posterior.shape)
    out = posterior * noise
    sums = out.sum(axis=1, keepdims=True)
    # a whole row can only vanish if the posterior row was all-zero already
    return np.where(sums > 0, out / np.where(sums > 0, sums, 1.0), posterior)


def sample_leakage(inst: MirrorGameInstance, asg: TwinAssignment, q: int,
                   magnitude: float, rng: np.random.Generator) -> float:
    """One draw of I(Yo_q; S) under the perturbed posterior P(S | Yo_q)."""
    j3 = prob.markov_compose(inst.joints[q], asg.original[q])
    sy = j3.margin_ac().table          # (S, Yo)
    p_y = sy.sum(axis=0)
    post = np.where(p_y[None, :] > 0, sy / np.where(p_y > 0, p_y, 1.0), 0.0).T  # (Yo, S)
    post = perturb_posterior(post, magnitude, rng)
    joint = JointPmf2((p_y[:, None] * post).T)
    return prob.mutual_information(joint)


@dataclass(frozen=True)
class ChanceConstrainedProblem:
    """Chance-constrained form: every constraint becomes Pr{holds under the
    uncertainty} >= theta_i, and the objective is to push the theta vector up.

    Only the leakage constraint actually feels the uncertainty (it is the one
    whose posterior is perturbed); the others evaluate deterministically.
    """

    base: OptimizationProblem
    uncertainty: UncertaintyModel
    eps_floors: np.ndarray = None   # (eps1, eps2, eps3) or None for the strict form
    null_mode: str = "strict"       # "strict": |I| <= tol; "floored": I >= eps3

    def __post_init__(self):
        if self.null_mode not in ("strict", "floored"):
            raise ValidationError("null_mode must be 'strict' or 'floored'")

    @property
    def instance(self) -> MirrorGameInstance:
        return self.base.instance

    def _thresholds(self):
        if self.eps_floors is None:
            return NULL_TOL, NULL_TOL, None
        e1, e2, e3 = self.eps_floors
        return e1, e2, e3

    def constraint_holds(self, vals: np.ndarray, q: int, i: int) -> bool:
        """Deterministic part of constraint i for Bob q on precomputed values."""
        inst = self.instance
        e1, e2, e3 = self._thresholds()
        if i == 0:
            return vals[q, 0] >= inst.gamma2 - NULL_TOL
        if i == 1:
            return vals[q, 1] <= inst.gamma0[q] + NULL_TOL
        if i == 2:
            return vals[q, 2] <= inst.gamma3 + NULL_TOL
        if i == 3:
            return vals[q, 3] <= inst.gamma1[q] + NULL_TOL
        if i == 4:
            return vals[q, 4] > e1
        if i == 5:
            return vals[q, 5] > e2
        if self.null_mode == "floored":
            return vals[q, 6] >= e3
        return vals[q, 6] <= NULL_TOL

    def achievable_theta(self, asg: TwinAssignment, n_samples: int = 200,
                         seed: int = None) -> np.ndarray:
        """Estimated Pr{constraint holds} per (Bob, condition), shape (Q, 7).

        Index 2 here is the chance form of the objective, Pr{exposure <= gamma3}.
        """
        inst = self.instance
        vals = condition_values(inst, asg)
        theta = np.zeros((inst.q_count, 7))
        rng = np.random.default_rng(self.uncertainty.seed if seed is None else seed)
        for q in range(inst.q_count):
            for i in range(7):
                if i == 1 and self.uncertainty.magnitude > 0:
                    hits = 0
                    for _ in range(n_samples):
                        leak = sample_leakage(inst, asg, q, self.uncertainty.magnitude, rng)
                        hits += leak <= inst.gamma0[q] + NULL_TOL
                    theta[q, i] = hits / n_samples
                else:
                    theta[q, i] = 1.0 if self.constraint_holds(vals, q, i) else 0.0
        return theta

    def passes(self, asg: TwinAssignment, n_samples: int = 200, seed: int = None) -> bool:
        theta = self.achievable_theta(asg, n_samples=n_samples, seed=seed)
        return bool(np.all(theta >= self.instance.theta_levels[None, :] - 1e-12))


def chance_relax(p1: OptimizationProblem, u: UncertaintyModel) -> ChanceConstrainedProblem:
    return ChanceConstrainedProblem(base=p1, uncertainty=u)


def epsilon_floor(ccp: ChanceConstrainedProblem, eps, null_mode: str = "floored"
                  ) -> ChanceConstrainedProblem:
    """Replace the strict/equality constraints (v)-(vii) with eps floors.

    (v) and (vi) tighten monotonically (I > eps implies I > 0). For (vii) the
    relaxed form flips the equality into I >= eps3; the strict band is kept
    available via null_mode="strict" since the two readings contradict.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (3,) or np.any(eps <= 0):
        raise ValidationError("epsilon_floor: eps must be three positive reals")
    return replace(ccp, eps_floors=eps, null_mode=null_mode)


def boltzmann_posterior(p_x: Pmf, p_s_given_x: PrivacyMapping,
                        p_s_given_y: PrivacyMapping, omega: float) -> PrivacyMapping:
    """P(x | y) proportional to P(x) exp(-omega D(P(S|y) || P(S|x))).

    Rows of the result are indexed by y. Divergences are in bits; an infinite
    divergence zeroes the weight. A row with no surviving weight raises
    NumericUnderflowError (omega too large for the instance).
    """
    if omega < 0:
        raise ValidationError("boltzmann_posterior: omega must be non-negative")
    if p_s_given_x.input_size != p_x.alphabet_size:
        raise ValidationError("boltzmann_posterior: X alphabet mismatch")
    if p_s_given_x.output_size != p_s_given_y.output_size:
        raise ValidationError("boltzmann_posterior: S alphabet mismatch")
    n_y, n_x = p_s_given_y.input_size, p_x.alphabet_size
    div = np.zeros((n_y, n_x))
    for y in range(n_y):
        for x in range(n_x):
            try:
                div[y, x] = prob._kl_tables(p_s_given_y.rows[y], p_s_given_x.rows[x])
            except Exception:
                div[y, x] = np.inf
    with np.errstate(over="ignore"):
        w = p_x.probs[None, :] * np.exp(-omega * div)
    sums = w.sum(axis=1)
    if np.any(sums <= 0):
        raise NumericUnderflowError("boltzmann_posterior: a row lost all weight")
    return PrivacyMapping(w / sums[:, None])


@dataclass(frozen=True)
class BottleneckResult:
    gamma2_star: float
    vtheta1_star: float
    gap: float          # I(S; X_q) - I(Yo_q; S), >= 0 by data processing
    feasible: bool


def bottleneck_pair_search(inst: MirrorGameInstance, asg: TwinAssignment,
                           u: UncertaintyModel, vtheta_target: float,
                           q: int = 0, n_grid: int = 64) -> BottleneckResult:
    """Largest utility floor gamma2 on a grid such that Pr{I(X_q;Yo_q) >= gamma2}
    meets the target. The utility measure does not depend on the perturbed
    posterior, so the probability is an exact indicator."""
    _check_consistent(inst, asg)
    i_xy = prob.mutual_information(_xy_joint(inst, asg.original[q], q))
    i_sx = prob.mutual_information(inst.joints[q])
    j3 = prob.markov_compose(inst.joints[q], asg.original[q])
    i_sy = prob.mutual_information(j3.margin_ac())
    gap = i_sx - i_sy
    h_x = prob.entropy(inst.x_marginal(q))
    grid = np.linspace(0.0, h_x, n_grid)
    ok = grid <= i_xy + NULL_TOL
    if vtheta_target > 1.0 or not np.any(ok):
        return BottleneckResult(0.0, 0.0, gap, feasible=False)
    gamma2_star = float(grid[ok][-1])
    return BottleneckResult(gamma2_star, 1.0, gap, feasible=True)


def objective_decompose(inst: MirrorGameInstance, asg: TwinAssignment,
                        q: int, q_prime: int):
    """Both chain-rule terms of I(X_q; (Yo_q', Yv_q')):
    returns (I(X_q; Yo_q'), I(X_q; Yv_q' | Yo_q'))."""
    if q == q_prime:
        raise ValidationError("objective_decompose: q and q_prime must differ")
    _check_consistent(inst, asg)
    p_s = inst.source.probs
    x_given_s = inst.x_given_s(q)                                    # (S, X)
    o = _per_s_channel(inst, asg, q_prime, keep_o=True, keep_v=False)  # (S, Yo)
    v = _per_s_channel(inst, asg, q_prime, keep_o=False, keep_v=True)  # (S, Yv)
    # independence of Yo_q' and Yv_q' given S does NOT hold (they share X_q'),
    # so build the full per-s block for Bob q_prime
    xq = inst.x_given_s(q_prime)
    blk = np.einsum("sx,xo,xv->sov", xq, asg.original[q_prime].rows,
                    asg.virtual[q_prime].rows)                        # (S, Yo, Yv)
    joint = np.einsum("s,sx,sov->xvo", p_s, x_given_s, blk)           # (X, Yv, Yo)
    i_xo = prob.mutual_information(JointPmf3(joint).margin_ac())
    i_xv_given_o = prob.conditional_mutual_information(JointPmf3(joint))
    return float(i_xo), float(i_xv_given_o)


def _sum_channel(inst: MirrorGameInstance, asg: TwinAssignment, q: int):
    """P(Yo_q + Yv_q | S = s) with outputs embedded as real symbol values
    (index values for the original alphabet, symbol_values for the virtual).
    Returns the (|S|, n_sums) matrix and the sorted sum values."""
    x_given_s = inst.x_given_s(q)
    blk = np.einsum("sx,xo,xv->sov", x_given_s, asg.original[q].rows,
                    asg.virtual[q].rows)
    vo = np.arange(asg.original[q].output_size, dtype=float)
    vv = inst.symbol_values[q]
    sums = np.round(vo[:, None] + vv[None, :], 9)
    values = np.unique(sums)
    chan = np.zeros((blk.shape[0], values.size))
    for k, val in enumerate(values):
        chan[:, k] = blk[:, sums == val].sum(axis=1)
    return chan, values


def superposed_exposure(inst: MirrorGameInstance, asg: TwinAssignment, q: int) -> float:
    """I(X_q; {Yo_q' + Yv_q'}_{q' != q}): the exposure when every other Bob's
    pair is observed as a superposed sum rather than a separate tuple, the
    physical-layer reading of the total signal. Here the virtual twin really
    can mask the original, so the value falls as virtual power grows."""
    _check_consistent(inst, asg)
    p_s = inst.source.probs
    head = inst.x_given_s(q)
    others = np.ones((p_s.size, 1))
    for qp in range(inst.q_count):
        if qp == q:
            continue
        chan, _ = _sum_channel(inst, asg, qp)
        others = np.einsum("sa,sb->sab", others, chan).reshape(p_s.size, -1)
    table = np.einsum("s,sh,so->ho", p_s, head, others)
    return prob.mutual_information(JointPmf2(table))


def reference_binary_instance(q_count: int = 2, source_p: float = 0.5,
                              channel_flip: float = 0.15,
                              gamma0: float = 0.3, gamma1: float = 1.0,
                              gamma2: float = 0.1, gamma3: float = 1.5,
                              virtual_alphabet: int = 2) -> MirrorGameInstance:
    """Small Bernoulli-source instance used by the batch experiments."""
    p_s = Pmf.bernoulli(source_p)
    bsc = PrivacyMapping.bsc(channel_flip)
    joint = JointPmf2(p_s.probs[:, None] * bsc.rows)
    return MirrorGameInstance(
        joints=tuple(joint for _ in range(q_count)),
        gamma0=np.full(q_count, gamma0),
        gamma1=np.full(q_count, gamma1),
        gamma2=gamma2,
        gamma3=gamma3,
        virtual_alphabet=virtual_alphabet,
    )
