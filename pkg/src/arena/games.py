"""Player valuations, budgets, game assembly, and welfare functionals."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mechanisms import Mechanism

__all__ = [
    "INF",
    "Valuation",
    "Player",
    "Game",
    "utility",
    "liquid_welfare",
    "social_welfare",
    "optimal_liquid_welfare",
    "game_to_dict",
    "game_from_dict",
    "load_game",
    "dump_game",
]

INF = math.inf


@dataclass(frozen=True)
class Valuation:
    """A monotone nondecreasing concave differentiable valuation on [0, 1].

    Families (parameters stored as a, b):
      affine  v(x) = a*x + b          slope a >= 0, intercept b >= 0
      power   v(x) = a * x**b         scale a > 0, exponent b in (0, 1]
      log     v(x) = a * ln(1 + b*x)  scale a > 0, rate b > 0
    """

    family: str
    a: float
    b: float

    @classmethod
    def affine(cls, slope: float, intercept: float = 0.0) -> "Valuation":
        if slope < 0 or intercept < 0:
            raise ValueError("affine valuation needs slope >= 0 and intercept >= 0")
        return cls("affine", float(slope), float(intercept))

    @classmethod
    def power(cls, scale: float, exponent: float) -> "Valuation":
        if scale <= 0 or not 0 < exponent <= 1:
            raise ValueError("power valuation needs scale > 0 and exponent in (0, 1]")
        return cls("power", float(scale), float(exponent))

    @classmethod
    def log(cls, scale: float, rate: float) -> "Valuation":
        if scale <= 0 or rate <= 0:
            raise ValueError("log valuation needs scale > 0 and rate > 0")
        return cls("log", float(scale), float(rate))

    def value(self, x):
        if self.family == "affine":
            return self.a * x + self.b
        if self.family == "power":
            return self.a * np.power(x, self.b)
        return self.a * np.log1p(self.b * x)

    def slope(self, x: float) -> float:
        """Derivative of the valuation at x (may be +inf at 0 for power < 1)."""
        if self.family == "affine":
            return self.a
        if self.family == "power":
            if x == 0.0:
                return self.a if self.b == 1.0 else INF
            return self.a * self.b * x ** (self.b - 1.0)
        return self.a * self.b / (1.0 + self.b * x)

    def constant_marginal(self) -> float | None:
        """Marginal value when it does not depend on x, else None."""
        if self.family == "affine":
            return self.a
        if self.family == "power" and self.b == 1.0:
            return self.a
        return None

    def marginal_inverse(self, theta: float) -> float:
        """Largest x with slope(x) >= theta, for strictly decreasing marginals."""
        if self.family == "power":
            return (self.a * self.b / theta) ** (1.0 / (1.0 - self.b))
        if self.family == "log":
            return max(0.0, self.a / theta - 1.0 / self.b)
        raise ValueError("marginal_inverse needs a strictly decreasing marginal")

    def cap_point(self, budget: float) -> float:
        """Smallest x with v(x) >= budget (inf when the budget never binds)."""
        if budget == INF:
            return INF
        if float(self.value(0.0)) >= budget:
            return 0.0
        if self.family == "affine":
            return (budget - self.b) / self.a if self.a > 0 else INF
        if self.family == "power":
            return (budget / self.a) ** (1.0 / self.b)
        return math.expm1(budget / self.a) / self.b


@dataclass(frozen=True)
class Player:
    valuation: Valuation
    budget: float  # nonnegative, possibly math.inf

    def __post_init__(self):
        if not (self.budget >= 0):
            raise ValueError("budget must be nonnegative")


@dataclass(frozen=True)
class Game:
    players: tuple[Player, ...]

    def __init__(self, players: Sequence[Player]):
        if len(players) < 2:
            raise ValueError("a game needs at least two players")
        object.__setattr__(self, "players", tuple(players))

    @property
    def n(self) -> int:
        return len(self.players)


def utility(game: Game, mech: Mechanism, s: Sequence[float], i: int) -> float:
    """v_i(g_i(s)) - p_i(s), or -inf when the payment exceeds the budget."""
    d = mech.allocate(s)
    p = mech.payments(s)
    player = game.players[i]
    if p[i] > player.budget:
        return -INF
    return float(player.valuation.value(d[i])) - float(p[i])


def liquid_welfare(game: Game, d: Sequence[float]) -> float:
    """Total value with each player's contribution capped at her budget."""
    d = np.asarray(d, dtype=float)
    if (d < 0).any():
        raise ValueError("allocation entries must be nonnegative")
    return float(
        sum(
            min(float(pl.valuation.value(x)), pl.budget)
            for pl, x in zip(game.players, d)
        )
    )


def social_welfare(game: Game, d: Sequence[float]) -> float:
    d = np.asarray(d, dtype=float)
    return float(sum(float(pl.valuation.value(x)) for pl, x in zip(game.players, d)))


# ---------------------------------------------------------------------------
# Optimal liquid welfare by water-filling
# ---------------------------------------------------------------------------

def _effective_cap(player: Player) -> float:
    # beyond this point min(v, c) stops increasing; clip at the unit resource
    v = player.valuation
    if v.constant_marginal() == 0.0:
        return 0.0
    return min(v.cap_point(player.budget), 1.0)


def optimal_liquid_welfare(game: Game) -> tuple[np.ndarray, float]:
    """Maximize sum_i min(v_i(x_i), c_i) over x >= 0 with sum x_i <= 1.

    Water-filling on marginal value: allocate by descending marginal until the
    resource runs out, each player truncated at the point where her valuation
    reaches her budget.  Players with v_i(0) >= c_i receive nothing and
    contribute their budget.
    """
    n = game.n
    caps = np.array([_effective_cap(pl) for pl in game.players])
    if caps.sum() <= 1.0:
        x = caps.copy()
    else:
        steppers = []  # (index, constant marginal)
        smooth = []
        for i, pl in enumerate(game.players):
            m = pl.valuation.constant_marginal()
            if m is not None:
                if m > 0 and caps[i] > 0:
                    steppers.append((i, m))
            elif caps[i] > 0:
                smooth.append(i)

        def total(theta: float) -> float:
            t = sum(caps[i] for i, m in steppers if m >= theta)
            for i in smooth:
                t += min(caps[i], game.players[i].valuation.marginal_inverse(theta))
            return t

        hi = max([m for _, m in steppers], default=1.0)
        while total(hi) > 1.0:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if total(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        theta = hi  # total(theta) <= 1 <= total(lo)

        x = np.zeros(n)
        tol = 1e-9 * (1.0 + theta)
        tied = []
        for i, m in steppers:
            if m >= theta + tol:
                x[i] = caps[i]
            elif abs(m - theta) < tol:
                tied.append(i)
        for i in smooth:
            x[i] = min(caps[i], game.players[i].valuation.marginal_inverse(theta))
        remaining = 1.0 - x.sum()
        for i in sorted(tied):  # lowest index first
            if remaining <= 0:
                break
            grant = min(caps[i], remaining)
            x[i] = grant
            remaining -= grant

    return x, liquid_welfare(game, x)


# ---------------------------------------------------------------------------
# Game spec files (JSON)
# ---------------------------------------------------------------------------

_FAMILY_FIELDS = {
    "affine": ("slope", "intercept"),
    "power": ("scale", "exponent"),
    "log": ("scale", "rate"),
}


def _valuation_to_dict(v: Valuation) -> dict:
    fa, fb = _FAMILY_FIELDS[v.family]
    return {"family": v.family, fa: v.a, fb: v.b}


def _valuation_from_dict(d: dict) -> Valuation:
    family = d.get("family")
    if family not in _FAMILY_FIELDS:
        raise ValueError(f"unknown valuation family {family!r}")
    fa, fb = _FAMILY_FIELDS[family]
    ctor = {"affine": Valuation.affine, "power": Valuation.power, "log": Valuation.log}
    return ctor[family](float(d[fa]), float(d[fb]))


def game_to_dict(game: Game) -> dict:
    players = []
    for pl in game.players:
        budget = "inf" if pl.budget == INF else pl.budget
        players.append({"valuation": _valuation_to_dict(pl.valuation), "budget": budget})
    return {"players": players}


def game_from_dict(d: dict) -> Game:
    try:
        raw_players = d["players"]
    except (KeyError, TypeError):
        raise ValueError('game spec must be an object with a "players" list') from None
    players = []
    for entry in raw_players:
        budget = entry["budget"]
        if isinstance(budget, str):
            if budget != "inf":
                raise ValueError(f'budget must be a number or "inf", got {budget!r}')
            budget = INF
        players.append(Player(_valuation_from_dict(entry["valuation"]), float(budget)))
    return Game(players)


def load_game(path: str) -> Game:
    with open(path) as fh:
        return game_from_dict(json.load(fh))


def dump_game(game: Game, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh, indent=2, sort_keys=True)
        fh.write("\n")
