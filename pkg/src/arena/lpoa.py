"""Liquid price of anarchy machinery: affinized games, the master ratio, scans.

The central object is the master ratio

    (sum_{i != j} p_i(s) + lambda_j(s)) / (sum_{i != j} p_i(s) + lambda_j(s) g_j(s))

with lambda_j the payment derivative divided by the allocation derivative at
the pivot player's own signal.  Its supremum over signal profiles upper-bounds
the liquid price of anarchy of the mechanism, and when the generating profile
is an equilibrium of its affinized game the value is also a lower bound.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .equilibrium import (
    EquilibriumResult,
    _deviation_scan,
    classify_players,
    find_equilibrium,
    VERIFY_TOL,
)
from .games import INF, Game, Player, Valuation, liquid_welfare, optimal_liquid_welfare
from .mechanisms import Mechanism, as_signal_vector

__all__ = [
    "DegeneratePointError",
    "AffinizedGame",
    "ScanResult",
    "SearchConfig",
    "WitnessReport",
    "GameLpoaResult",
    "DeltaReport",
    "lambda_coefficient",
    "affinize",
    "master_ratio",
    "lpoa_upper_scan",
    "ratio_grid",
    "lower_bound_witness",
    "game_lpoa",
    "delta_diagnostic",
]

_DERIVATIVE_FLOOR = 1e-14


class DegeneratePointError(ArithmeticError):
    """The master ratio is undefined at this profile (vanishing derivative)."""


def _require_two_positive(s: np.ndarray) -> None:
    if (s > 0).sum() < 2:
        raise DegeneratePointError(
            "master-program quantities need at least two positive signals"
        )


def lambda_coefficient(mech: Mechanism, s, i: int = 0) -> float:
    """Payment derivative over allocation derivative at player i's signal."""
    arr = as_signal_vector(s)
    _require_two_positive(arr)
    g_slope = mech.allocation_derivative(arr, i)
    if g_slope <= _DERIVATIVE_FLOOR:
        raise DegeneratePointError(
            f"allocation derivative {g_slope:.3e} at player {i} is numerically zero"
        )
    return mech.payment_derivative(arr, i) / g_slope


@dataclass(frozen=True)
class AffinizedGame:
    """Affine-valuation game generated by a mechanism at a signal profile.

    The pivot player keeps an unbounded budget and zero intercept; every other
    player has intercept and budget equal to her payment at the profile.
    """

    game: Game
    signals: np.ndarray
    pivot: int


def affinize(mech: Mechanism, s, j: int = 0) -> AffinizedGame:
    arr = as_signal_vector(s)
    _require_two_positive(arr)
    pay = mech.payments(arr)
    players = []
    for i in range(arr.size):
        lam = lambda_coefficient(mech, arr, i)
        if i == j:
            players.append(Player(Valuation.affine(lam, 0.0), INF))
        else:
            players.append(Player(Valuation.affine(lam, float(pay[i])), float(pay[i])))
    return AffinizedGame(game=Game(players), signals=arr.copy(), pivot=j)


def master_ratio(mech: Mechanism, s, pivot: int = 0) -> float:
    arr = as_signal_vector(s)
    _require_two_positive(arr)
    lam = lambda_coefficient(mech, arr, pivot)
    pay = mech.payments(arr)
    others = float(pay.sum() - pay[pivot])
    share = float(mech.allocate(arr)[pivot])
    return (others + lam) / (others + lam * share)


# ---------------------------------------------------------------------------
# Supremum scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    ratio_lo: float = 1e-8
    ratio_hi: float = 1e8
    ratio_points: int = 400
    scales: tuple[float, ...] = (1e-3, 1.0, 1e3)
    random_profiles: int = 256
    seed: int = 0
    refine_iters: int = 120


@dataclass
class ScanResult:
    sup_estimate: float
    argmax: np.ndarray
    evaluations: int
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sup_estimate": self.sup_estimate,
            "argmax": [float(x) for x in self.argmax],
            "evaluations": self.evaluations,
            "trace": self.trace,
        }


def _env_workers() -> int:
    try:
        return max(1, int(os.environ.get("ARENA_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_profiles(mech: Mechanism, profiles: list[np.ndarray], pivots=None):
    """Master ratio per (profile, pivot); degenerate points yield -inf."""

    def one(item):
        s, pivot = item
        try:
            return master_ratio(mech, s, pivot)
        except DegeneratePointError:
            return -INF

    items = [(s, 0) for s in profiles] if pivots is None else list(zip(profiles, pivots))
    workers = _env_workers()
    if workers == 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def lpoa_upper_scan(mech: Mechanism, n: int, search: Optional[SearchConfig] = None) -> ScanResult:
    """Structured sweep of the master ratio, honestly a lower estimate of the sup.

    Families: player-1 signal against an equal tail, log-spaced ratios times a
    few scales, plus seeded random profiles (evaluated at every pivot).  The
    best point is refined coordinate-wise by golden section in log-space.
    """
    from .equilibrium import golden_max

    cfg = search or SearchConfig()
    if n < 2:
        raise ValueError("scan needs n >= 2")

    profiles: list[np.ndarray] = []
    pivots: list[int] = []
    ratios = np.geomspace(cfg.ratio_lo, cfg.ratio_hi, cfg.ratio_points)
    for scale in cfg.scales:
        for r in ratios:
            s = np.full(n, float(scale))
            s[0] = r * scale
            profiles.append(s)
            pivots.append(0)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.random_profiles):
        s = 10.0 ** rng.uniform(-6.0, 6.0, size=n)
        for pivot in range(n):
            profiles.append(s)
            pivots.append(pivot)

    values = _evaluate_profiles(mech, profiles, pivots)
    evaluations = len(values)
    k = int(np.argmax(values))
    best_val = values[k]
    best_s = profiles[k].copy()
    best_pivot = pivots[k]
    trace = [{"stage": "grid", "value": best_val, "profile": [float(x) for x in best_s]}]

    # coordinate-wise golden refinement in log-space around the best profile
    for _ in range(2):
        for coord in range(n):
            base = best_s[coord]
            if base <= 0:
                continue
            lo, hi = math.log(base / 10.0), math.log(base * 10.0)

            def f(logv: float) -> float:
                trial = best_s.copy()
                trial[coord] = math.exp(logv)
                try:
                    return master_ratio(mech, trial, best_pivot)
                except DegeneratePointError:
                    return -INF

            x, fx = golden_max(f, lo, hi, xtol=1e-12, max_iter=cfg.refine_iters)
            evaluations += cfg.refine_iters
            if fx > best_val:
                best_val = fx
                best_s = best_s.copy()
                best_s[coord] = math.exp(x)
                trace.append(
                    {"stage": f"refine-coord-{coord}", "value": best_val,
                     "profile": [float(v) for v in best_s]}
                )

    # put the pivot first so the reported profile matches the pivot-1 program
    if best_pivot != 0:
        best_s = np.concatenate([[best_s[best_pivot]], np.delete(best_s, best_pivot)])
    return ScanResult(
        sup_estimate=float(best_val),
        argmax=best_s,
        evaluations=evaluations,
        trace=trace,
    )


def ratio_grid(
    mech: Mechanism,
    n: int,
    ratios: Sequence[float],
    scale: float = 1.0,
) -> list[tuple[np.ndarray, float]]:
    """Master-ratio rows over the player-1-vs-equal-tail family, for CSV dumps."""
    rows = []
    for r in ratios:
        s = np.full(n, float(scale))
        s[0] = float(r) * scale
        try:
            rows.append((s, master_ratio(mech, s)))
        except DegeneratePointError:
            continue
    return rows


# ---------------------------------------------------------------------------
# Witness certificates and per-game LPoA
# ---------------------------------------------------------------------------

@dataclass
class WitnessReport:
    """Outcome of checking that s is an equilibrium of its affinized game."""

    mechanism: str
    signals: np.ndarray
    ratio: float
    certified: bool
    max_gain: float
    deviation: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "signals": [float(x) for x in self.signals],
            "ratio": self.ratio,
            "certified": self.certified,
            "max_gain": self.max_gain,
            "deviation": self.deviation,
        }


def lower_bound_witness(mech: Mechanism, s, grid_size: int = 512) -> WitnessReport:
    """Certify master_ratio(mech, s) as an LPoA lower bound when s survives
    the deviation scan on its affinized game; otherwise report the deviation."""
    arr = as_signal_vector(s)
    ratio = master_ratio(mech, arr)
    aff = affinize(mech, arr, 0)
    gain, player, signal = _deviation_scan(aff.game, mech, arr, grid_size)
    certified = gain <= VERIFY_TOL
    deviation = None if certified else {"player": player, "signal": signal, "gain": gain}
    return WitnessReport(
        mechanism=mech.name,
        signals=arr.copy(),
        ratio=float(ratio),
        certified=bool(certified),
        max_gain=float(gain),
        deviation=deviation,
    )


@dataclass
class GameLpoaResult:
    """Worst-case welfare ratio over the equilibria found (non-exhaustive).

    Equilibria in which a single player signals (everyone else at zero) are
    convention artifacts: the sole signaler pays nothing regardless of her
    signal, and counting them would make every mechanism's worst case
    unbounded, contradicting the finite bounds this package reproduces.  They
    are reported separately and enter the ratio only when no equilibrium with
    two active players was found.
    """

    value: Optional[float]
    lw_opt: float
    equilibria: list[EquilibriumResult] = field(default_factory=list)
    lw_values: list[float] = field(default_factory=list)
    degenerate: list[EquilibriumResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "lw_opt": self.lw_opt,
            "equilibria": [e.to_dict() for e in self.equilibria],
            "lw_values": self.lw_values,
            "degenerate": [e.to_dict() for e in self.degenerate],
        }


def game_lpoa(game: Game, mech: Mechanism, inits: Sequence) -> GameLpoaResult:
    """Max over converged equilibria of LW* / LW(allocation)."""
    _, lw_opt = optimal_liquid_welfare(game)
    found: list[EquilibriumResult] = []
    for init in inits:
        res = find_equilibrium(game, mech, init)
        if not res.converged:
            continue
        if any(np.max(np.abs(res.signals - other.signals)) <= 1e-6 for other in found):
            continue
        found.append(res)
    active = [res for res in found if (res.signals > 0).sum() >= 2]
    degenerate = [res for res in found if (res.signals > 0).sum() < 2]
    used = active if active else degenerate
    if not used:
        return GameLpoaResult(value=None, lw_opt=lw_opt)
    lw_values = [liquid_welfare(game, res.allocation) for res in used]
    worst = min(lw_values)
    value = INF if worst == 0 else lw_opt / worst
    return GameLpoaResult(
        value=float(value),
        lw_opt=lw_opt,
        equilibria=used,
        lw_values=lw_values,
        degenerate=degenerate if active else [],
    )


# ---------------------------------------------------------------------------
# The per-player accounting behind the affinization inequality
# ---------------------------------------------------------------------------

@dataclass
class DeltaReport:
    applicable: bool
    reason: Optional[str]
    pivot: Optional[int]
    deltas: Optional[np.ndarray]
    total: Optional[float]
    classes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "reason": self.reason,
            "pivot": self.pivot,
            "deltas": None if self.deltas is None else [float(x) for x in self.deltas],
            "total": self.total,
            "classes": list(self.classes),
        }


def delta_diagnostic(game: Game, mech: Mechanism, s, x_opt) -> DeltaReport:
    """Per-player welfare-change accounting between the game and its affinized
    counterpart at the pivot (argmax lambda over the A and B players).

    delta(i) = min(v_i(x_i), c_i) - min(vt_i(xt_i), ct_i)
             - min(v_i(d_i), c_i) + min(vt_i(d_i), ct_i)

    with xt the one-hot allocation at the pivot; their sum must be <= 0 up to
    numerical slack whenever s is a verified equilibrium.
    """
    arr = as_signal_vector(s)
    x_opt = np.asarray(x_opt, dtype=float)
    classes = classify_players(game, mech, arr)
    if (arr > 0).sum() < 2:
        return DeltaReport(
            applicable=False,
            reason="degenerate equilibrium: fewer than two positive signals, "
            "derivative ratios are undefined for the sole signaler",
            pivot=None,
            deltas=None,
            total=None,
            classes=classes,
        )
    ab = [i for i, tag in enumerate(classes) if tag in ("A", "B")]
    if not ab:
        return DeltaReport(
            applicable=False,
            reason="no A or B players: every contribution is budget-capped and the ratio is 1",
            pivot=None,
            deltas=None,
            total=None,
            classes=classes,
        )
    lams = {i: lambda_coefficient(mech, arr, i) for i in ab}
    pivot = min(ab, key=lambda i: (-lams[i], i))
    aff = affinize(mech, arr, pivot)
    d = mech.allocate(arr)
    x_tilde = np.zeros(game.n)
    x_tilde[pivot] = 1.0

    deltas = np.zeros(game.n)
    for i in range(game.n):
        v, c = game.players[i].valuation, game.players[i].budget
        vt, ct = aff.game.players[i].valuation, aff.game.players[i].budget
        deltas[i] = (
            min(float(v.value(x_opt[i])), c)
            - min(float(vt.value(x_tilde[i])), ct)
            - min(float(v.value(d[i])), c)
            + min(float(vt.value(d[i])), ct)
        )
    return DeltaReport(
        applicable=True,
        reason=None,
        pivot=pivot,
        deltas=deltas,
        total=float(deltas.sum()),
        classes=classes,
    )
