"""Explicit lower-bound game constructions and the pay-your-signal envelope."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .equilibrium import find_equilibrium, verify_equilibrium
from .games import (
    INF,
    Game,
    Player,
    Valuation,
    game_to_dict,
    liquid_welfare,
    optimal_liquid_welfare,
)
from .mechanisms import Mechanism

__all__ = ["ConstructionReport", "theorem1_games", "budget_aware_games", "pys_envelope"]


@dataclass
class ConstructionReport:
    """A pair of games sharing an equilibrium whose welfare gap bounds the LPoA."""

    kind: str
    mechanism: str
    n: int
    ok: bool
    reason: Optional[str] = None
    game1: Optional[Game] = None
    game2: Optional[Game] = None
    signals: Optional[np.ndarray] = None
    allocation: Optional[np.ndarray] = None
    lw_eq_g1: Optional[float] = None
    lw_eq_g2: Optional[float] = None
    lw_opt_g2: Optional[float] = None
    bound: Optional[float] = None
    verified_g1: bool = False
    verified_g2: bool = False
    budget_feasible: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mechanism": self.mechanism,
            "n": self.n,
            "ok": self.ok,
            "reason": self.reason,
            "game1": None if self.game1 is None else game_to_dict(self.game1),
            "game2": None if self.game2 is None else game_to_dict(self.game2),
            "signals": None if self.signals is None else [float(x) for x in self.signals],
            "allocation": None if self.allocation is None else [float(x) for x in self.allocation],
            "lw_eq_g1": self.lw_eq_g1,
            "lw_eq_g2": self.lw_eq_g2,
            "lw_opt_g2": self.lw_opt_g2,
            "bound": self.bound,
            "verified_g1": self.verified_g1,
            "verified_g2": self.verified_g2,
            "budget_feasible": self.budget_feasible,
        }


def _failed(kind: str, mech: Mechanism, n: int, reason: str) -> ConstructionReport:
    return ConstructionReport(kind=kind, mechanism=mech.name, n=n, ok=False, reason=reason)


def theorem1_games(mech: Mechanism, n: int) -> ConstructionReport:
    """Identical linear players with no budgets, then cap everyone but the
    smallest-share player at her equilibrium share; the shared equilibrium
    yields a liquid-welfare gap of 2 - d_min against the one-hot optimum."""
    game1 = Game([Player(Valuation.affine(1.0), INF) for _ in range(n)])
    res = find_equilibrium(game1, mech, np.full(n, 1.0 / n))
    if not res.converged:
        return _failed("thm1", mech, n, "no converged equilibrium for the symmetric linear game")
    s, d = res.signals, res.allocation
    istar = int(np.argmin(d))  # first occurrence = lowest index tie-break
    players2 = []
    for i in range(n):
        if i == istar:
            players2.append(Player(Valuation.affine(1.0), INF))
        else:
            players2.append(Player(Valuation.affine(1.0, float(d[i])), float(d[i])))
    game2 = Game(players2)

    pay = mech.payments(s)
    feasible = all(pay[i] <= d[i] + 1e-9 for i in range(n) if i != istar)
    verified_g2, _ = verify_equilibrium(game2, mech, s)
    lw_eq_g1 = liquid_welfare(game1, d)
    lw_eq_g2 = liquid_welfare(game2, d)
    _, lw_opt_g2 = optimal_liquid_welfare(game2)
    return ConstructionReport(
        kind="thm1",
        mechanism=mech.name,
        n=n,
        ok=feasible and verified_g2,
        reason=None if feasible else "equilibrium payment exceeds the capped budget",
        game1=game1,
        game2=game2,
        signals=s,
        allocation=d,
        lw_eq_g1=lw_eq_g1,
        lw_eq_g2=lw_eq_g2,
        lw_opt_g2=lw_opt_g2,
        bound=lw_opt_g2 / lw_eq_g2,
        verified_g1=res.converged,
        verified_g2=verified_g2,
        budget_feasible=feasible,
    )


def budget_aware_games(mech: Mechanism, n: int) -> ConstructionReport:
    """Two unit-budget linear players (the rest value nothing); raising the
    larger-share player's valuation by 1 leaves the equilibrium intact while
    the optimum hands the resource to the other, giving a 4/3-style gap."""
    if n < 2:
        raise ValueError("construction needs n >= 2")
    players1 = [
        Player(Valuation.affine(1.0) if i < 2 else Valuation.affine(0.0), 1.0)
        for i in range(n)
    ]
    game1 = Game(players1)
    res = find_equilibrium(game1, mech, np.full(n, 1.0 / n))
    if not res.converged:
        return _failed("budget-aware", mech, n, "no converged equilibrium for the base game")
    s, d = res.signals, res.allocation
    low = 0 if d[0] <= d[1] else 1
    high = 1 - low
    players2 = list(players1)
    players2[high] = Player(Valuation.affine(1.0, 1.0), 1.0)
    game2 = Game(players2)

    pay = mech.payments(s)
    feasible = all(pay[i] <= game2.players[i].budget + 1e-9 for i in range(n))
    verified_g2, _ = verify_equilibrium(game2, mech, s)
    lw_eq_g1 = liquid_welfare(game1, d)
    lw_eq_g2 = liquid_welfare(game2, d)
    _, lw_opt_g2 = optimal_liquid_welfare(game2)
    return ConstructionReport(
        kind="budget-aware",
        mechanism=mech.name,
        n=n,
        ok=feasible and verified_g2,
        reason=None if feasible else "equilibrium payment exceeds a budget",
        game1=game1,
        game2=game2,
        signals=s,
        allocation=d,
        lw_eq_g1=lw_eq_g1,
        lw_eq_g2=lw_eq_g2,
        lw_opt_g2=lw_opt_g2,
        bound=lw_opt_g2 / lw_eq_g2,
        verified_g1=res.converged,
        verified_g2=verified_g2,
        budget_feasible=feasible,
    )


def pys_envelope(beta_prime: float, y: float) -> float:
    """Lower envelope for two-player pay-your-signal allocation functions:
    (1/b)(1 - exp(-b*y/(b-1))) for b > 1."""
    if beta_prime <= 1.0:
        raise ValueError("beta_prime must exceed 1")
    if y < 0:
        raise ValueError("y must be nonnegative")
    return (1.0 - math.exp(-beta_prime * y / (beta_prime - 1.0))) / beta_prime
