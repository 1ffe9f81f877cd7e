"""Exact finite-alphabet probability engine.

All information measures are in bits (log base 2). Tables are dense numpy
arrays; alphabets are desk-scale. Inputs are validated on construction and
rejected (not renormalized) when probability sums are off by more than
SUM_TOL.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfiniteDivergenceError, ValidationError

SUM_TOL = 1e-12


def _check_table(table: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(table)):
        raise ValidationError(f"{name}: non-finite entries")
    if np.any(table < 0):
        raise ValidationError(f"{name}: negative entries")
    total = float(table.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise ValidationError(f"{name}: entries sum to {total!r}, not 1")


def _plogp(p: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0 by continuity
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz])
    return out


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        if self.probs.ndim != 1 or self.probs.size < 1:
            raise ValidationError("Pmf: probs must be a non-empty 1-D array")
        _check_table(self.probs, "Pmf")

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def to_jsonable(self):
        return list(self.probs)

    @classmethod
    def from_jsonable(cls, data) -> "Pmf":
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def bernoulli(cls, p: float) -> "Pmf":
        return cls(np.array([1.0 - p, p]))


@dataclass(frozen=True)
class JointPmf2:
    """Joint distribution over a pair of finite alphabets, table[a, b]."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", np.asarray(self.table, dtype=float))
        if self.table.ndim != 2:
            raise ValidationError("JointPmf2: table must be 2-D")
        _check_table(self.table, "JointPmf2")

    @property
    def shape(self):
        return self.table.shape

    def marginal_a(self) -> Pmf:
        return Pmf(self.table.sum(axis=1))

    def marginal_b(self) -> Pmf:
        return Pmf(self.table.sum(axis=0))

    def swapped(self) -> "JointPmf2":
        return JointPmf2(self.table.T)

    def to_jsonable(self):
        return [list(row) for row in self.table]

    @classmethod
    def from_jsonable(cls, data) -> "JointPmf2":
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def product(cls, pa: Pmf, pb: Pmf) -> "JointPmf2":
        return cls(np.outer(pa.probs, pb.probs))


@dataclass(frozen=True)
class JointPmf3:
    """Joint distribution over a triple of finite alphabets, table[a, b, c]."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", np.asarray(self.table, dtype=float))
        if self.table.ndim != 3:
            raise ValidationError("JointPmf3: table must be 3-D")
        _check_table(self.table, "JointPmf3")

    @property
    def shape(self):
        return self.table.shape

    def margin_ab(self) -> JointPmf2:
        return JointPmf2(self.table.sum(axis=2))

    def margin_ac(self) -> JointPmf2:
        return JointPmf2(self.table.sum(axis=1))

    def margin_bc(self) -> JointPmf2:
        return JointPmf2(self.table.sum(axis=0))

    def to_jsonable(self):
        return [[list(row) for row in plane] for plane in self.table]

    @classmethod
    def from_jsonable(cls, data) -> "JointPmf3":
        return cls(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class PrivacyMapping:
    """Row-stochastic conditional table: rows[x] is P(output | input=x)."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=float))
        if self.rows.ndim != 2:
            raise ValidationError("PrivacyMapping: rows must be 2-D")
        if not np.all(np.isfinite(self.rows)) or np.any(self.rows < 0):
            raise ValidationError("PrivacyMapping: rows must be finite and non-negative")
        sums = self.rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SUM_TOL):
            raise ValidationError("PrivacyMapping: each row must sum to 1")

    @property
    def input_size(self) -> int:
        return self.rows.shape[0]

    @property
    def output_size(self) -> int:
        return self.rows.shape[1]

    def push(self, p_in: Pmf) -> Pmf:
        """Output marginal of p_in through the channel."""
        if p_in.alphabet_size != self.input_size:
            raise ValidationError("push: input alphabet mismatch")
        return Pmf(p_in.probs @ self.rows)

    def to_jsonable(self):
        return [list(row) for row in self.rows]

    @classmethod
    def from_jsonable(cls, data) -> "PrivacyMapping":
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def identity(cls, n: int) -> "PrivacyMapping":
        return cls(np.eye(n))

    @classmethod
    def constant(cls, n_in: int, n_out: int, y: int = 0) -> "PrivacyMapping":
        rows = np.zeros((n_in, n_out))
        rows[:, y] = 1.0
        return cls(rows)

    @classmethod
    def bsc(cls, flip: float) -> "PrivacyMapping":
        return cls(np.array([[1.0 - flip, flip], [flip, 1.0 - flip]]))


def entropy(p: Pmf) -> float:
    """Shannon entropy H(p) in bits."""
    return float(-_plogp(p.probs).sum())


def _kl_tables(p: np.ndarray, q: np.ndarray) -> float:
    if p.shape != q.shape:
        raise ValidationError("kl_divergence: shape mismatch")
    mass_on_zero = (p > 0) & (q == 0)
    if np.any(mass_on_zero):
        raise InfiniteDivergenceError("kl_divergence: p has mass where q has none")
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """D(p || q) in bits; raises InfiniteDivergenceError on support violation."""
    return _kl_tables(p.probs, q.probs)


def mutual_information(j: JointPmf2) -> float:
    """I(A;B) = D(joint || product of marginals), in bits."""
    prod = np.outer(j.table.sum(axis=1), j.table.sum(axis=0))
    # prod is zero only where the joint is zero, so support is always fine
    nz = j.table > 0
    return float(np.sum(j.table[nz] * np.log2(j.table[nz] / prod[nz])))


def conditional_entropy(j: JointPmf2) -> float:
    """H(A|B) = H(A,B) - H(B) in bits."""
    h_joint = float(-_plogp(j.table).sum())
    h_b = entropy(j.marginal_b())
    return max(h_joint - h_b, 0.0)


def conditional_mutual_information(j: JointPmf3) -> float:
    """I(X;Y|Z) for a joint over (X, Y, Z), in bits."""
    total = 0.0
    p_z = j.table.sum(axis=(0, 1))
    for z in range(j.table.shape[2]):
        if p_z[z] <= 0:
            continue
        slab = j.table[:, :, z] / p_z[z]
        total += p_z[z] * mutual_information(JointPmf2(slab))
    return total


def markov_compose(p_sx: JointPmf2, mapping: PrivacyMapping) -> JointPmf3:
    """Joint P(s, x, y) = P(s, x) P(y|x): the chain S -> X -> Y."""
    if mapping.input_size != p_sx.shape[1]:
        raise ValidationError("markov_compose: mapping input alphabet mismatch")
    table = p_sx.table[:, :, None] * mapping.rows[None, :, :]
    return JointPmf3(table)
