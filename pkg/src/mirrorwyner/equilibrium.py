"""Coalition coloring game: same-color payoffs, best-response dynamics,
exhaustive Nash verification, and the annular weight-band probability."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .mirror import UncertaintyModel


@dataclass(frozen=True)
class KCutGame:
    """n players, directed weights w[i, j] (zero diagonal), K colors.

    payoff_mode "same_color" sums weights over same-colored neighbors, the
    coordination form; "cut" sums over differently-colored neighbors, the
    classical cut form, kept for comparison.
    """

    weights: np.ndarray
    k: int
    payoff_mode: str = "same_color"

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValidationError("KCutGame: weights must be a square matrix")
        if np.any(np.diag(w) != 0):
            raise ValidationError("KCutGame: diagonal must be zero")
        if self.k < 2:
            raise ValidationError("KCutGame: need K >= 2 colors")
        if self.payoff_mode not in ("same_color", "cut"):
            raise ValidationError("KCutGame: unknown payoff_mode")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.weights, self.weights.T))

    def to_jsonable(self):
        return {"weights": [list(r) for r in self.weights], "k": self.k,
                "payoff_mode": self.payoff_mode}

    @classmethod
    def from_jsonable(cls, data) -> "KCutGame":
        return cls(np.asarray(data["weights"], dtype=float), int(data["k"]),
                   data.get("payoff_mode", "same_color"))


@dataclass(frozen=True)
class StrategyProfile:
    colors: tuple

    def __post_init__(self):
        colors = tuple(int(c) for c in self.colors)
        object.__setattr__(self, "colors", colors)

    def check(self, g: KCutGame) -> None:
        if len(self.colors) != g.n:
            raise ValidationError("StrategyProfile: wrong length")
        if any(c < 0 or c >= g.k for c in self.colors):
            raise ValidationError("StrategyProfile: color out of range")

    def with_color(self, i: int, c: int) -> "StrategyProfile":
        return StrategyProfile(self.colors[:i] + (c,) + self.colors[i + 1:])


@dataclass(frozen=True)
class TorusBand:
    rho1: float
    rho2: float
    phi1: float
    phi2: float

    def __post_init__(self):
        if not 0 < self.rho1 < self.rho2:
            raise ValidationError("TorusBand: need 0 < rho1 < rho2")
        if self.phi1 > self.phi2:
            raise ValidationError("TorusBand: need phi1 <= phi2")


def payoff(g: KCutGame, p: StrategyProfile, i: int) -> float:
    """Sum of w[i, j] over neighbors j sharing (same_color mode) or not
    sharing (cut mode) player i's color."""
    p.check(g)
    if i < 0 or i >= g.n:
        raise ValidationError("payoff: player index out of range")
    colors = np.asarray(p.colors)
    same = colors == colors[i]
    same[i] = False
    mask = same if g.payoff_mode == "same_color" else ~same & (np.arange(g.n) != i)
    return float(g.weights[i, mask].sum())


@dataclass(frozen=True)
class BestResponseResult:
    profile: StrategyProfile
    rounds: int
    converged: bool


def best_response_dynamics(g: KCutGame, init: StrategyProfile,
                           max_rounds: int = 1000) -> BestResponseResult:
    """Sequential sweeps; a player moves only to a strictly better color
    (lowest-index winner among the strictly-better options); stops when a
    full sweep changes nothing."""
    init.check(g)
    profile = init
    for rounds in range(1, max_rounds + 1):
        changed = False
        for i in range(g.n):
            base = payoff(g, profile, i)
            best_c, best_v = profile.colors[i], base
            for c in range(g.k):
                if c == profile.colors[i]:
                    continue
                v = payoff(g, profile.with_color(i, c), i)
                if v > best_v + 0.0:
                    best_c, best_v = c, v
            if best_c != profile.colors[i]:
                profile = profile.with_color(i, best_c)
                changed = True
        if not changed:
            return BestResponseResult(profile, rounds, converged=True)
    return BestResponseResult(profile, max_rounds, converged=False)


def verify_nash(g: KCutGame, p: StrategyProfile):
    """Exhaustively test all n*(K-1) unilateral deviations.

    Returns (is_nash, worst improving deviation or None). The deviation is
    reported as (player, color, gain)."""
    p.check(g)
    worst = None
    for i in range(g.n):
        base = payoff(g, p, i)
        for c in range(g.k):
            if c == p.colors[i]:
                continue
            gain = payoff(g, p.with_color(i, c), i) - base
            if gain > 0 and (worst is None or gain > worst[2]):
                worst = (i, c, gain)
    return worst is None, worst


def potential(g: KCutGame, p: StrategyProfile) -> float:
    """Symmetrized same-color pair potential; strictly increases at every
    improving switch when weights are symmetric."""
    colors = np.asarray(p.colors)
    same = colors[:, None] == colors[None, :]
    np.fill_diagonal(same, False)
    sym = (g.weights + g.weights.T) / 2
    return float(sym[same].sum() / 2)


def torus_band_check(g: KCutGame, p: StrategyProfile, band: TorusBand,
                     u: UncertaintyModel, n_samples: int) -> float:
    """Fraction of active (same-color, perturbed) weight magnitudes landing
    inside [phi1, phi2]. Deterministic when the uncertainty magnitude is 0."""
    p.check(g)
    if n_samples < 1:
        raise ValidationError("torus_band_check: need n_samples >= 1")
    colors = np.asarray(p.colors)
    active = colors[:, None] == colors[None, :]
    np.fill_diagonal(active, False)
    if not np.any(active):
        return 0.0
    w_active = g.weights[active]
    if u.magnitude == 0:
        mags = np.abs(w_active)
        return float(np.mean((mags >= band.phi1) & (mags <= band.phi2)))
    rng = np.random.default_rng(u.seed)
    hits = 0
    for _ in range(n_samples):
        mags = np.abs(w_active * (1.0 + u.magnitude * rng.uniform(-1, 1, w_active.shape)))
        hits += np.sum((mags >= band.phi1) & (mags <= band.phi2))
    return float(hits / (n_samples * w_active.size))


def mi_gap_weights(values: np.ndarray) -> np.ndarray:
    """Convention for deriving game weights from per-player rate values:
    w[i, j] = |value_i - value_j| with zero diagonal."""
    values = np.asarray(values, dtype=float)
    w = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(w, 0.0)
    return w
