"""Budget-constrained best response, equilibrium search, and verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .games import INF, Game, utility
from .mechanisms import Mechanism, SignalDomainError, as_signal_vector

__all__ = [
    "VERIFY_TOL",
    "EquilibriumResult",
    "feasible_signal_bound",
    "best_response",
    "find_equilibrium",
    "verify_equilibrium",
    "classify_players",
    "default_inits",
]

VERIFY_TOL = 1e-7
_SIGNAL_CEILING = 1e9  # hard cap for bracket expansion with infinite budgets


def _insert(others: np.ndarray, i: int, y: float) -> np.ndarray:
    return np.insert(others, i, y)


def hybrid_grid(hi: float, size: int) -> np.ndarray:
    """Half log-spaced on [1e-9*hi, hi], half linear, plus the endpoints 0, hi."""
    if hi <= 0:
        return np.array([0.0])
    k = size // 2
    logs = np.geomspace(1e-9 * hi, hi, k)
    lins = np.linspace(0.0, hi, size - k)
    return np.unique(np.concatenate([[0.0, hi], logs, lins]))


def golden_max(f, lo: float, hi: float, xtol: float = 1e-10, max_iter: int = 200):
    """Golden-section maximization of f on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    x = x1 if f1 >= f2 else x2
    return x, f(x)


def feasible_signal_bound(game: Game, mech: Mechanism, i: int, s_minus_i) -> float:
    """Largest own signal whose payment stays within player i's budget.

    Infinite when the budget is infinite or the opponents all signal zero
    (the unique nonzero signaler pays nothing).
    """
    others = np.asarray(s_minus_i, dtype=float)
    budget = game.players[i].budget
    if budget == INF or not (others > 0).any():
        return INF
    closed = mech.feasible_signal_inverse(budget, others)
    if closed is not None:
        return closed

    def pay(y: float) -> float:
        return float(mech.payments(_insert(others, i, y))[i])

    hi = 1.0
    while pay(hi) <= budget:
        hi *= 2.0
        if hi > 1e15:
            return hi
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if pay(mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


def _utility_slope(game: Game, mech: Mechanism, i: int, others: np.ndarray, y: float) -> float:
    """d/dy of v_i(g_i(y, s_-i)) - p_i(y, s_-i) via the mechanism derivatives."""
    profile = _insert(others, i, y)
    g = float(mech.allocate(profile)[i])
    g_slope = mech.allocation_derivative(profile, i)
    p_slope = mech.payment_derivative(profile, i)
    v_slope = game.players[i].valuation.slope(g)
    if math.isinf(v_slope):
        return INF if g_slope > 0 else -p_slope
    return v_slope * g_slope - p_slope


def best_response(game: Game, mech: Mechanism, i: int, s_minus_i) -> float:
    """Utility-maximizing own signal given the opponents' signals.

    When every opponent signals zero, any positive signal wins the whole
    resource at zero payment; returns the canonical 1 (or 0 for a player who
    values the whole resource no more than nothing).  The search evaluates a
    hybrid log/linear grid, refines the best bracket by golden section, and
    then polishes by bisecting the utility derivative: a value-only search
    cannot localize a flat optimum better than ~sqrt(eps), the stationarity
    condition can.  The grid stage also copes with non-concave utilities.
    """
    others = np.asarray(s_minus_i, dtype=float)
    player = game.players[i]
    if not (others > 0).any():
        # any positive signal wins the whole resource at zero payment; the
        # canonical 1 only makes sense when the resource is worth winning
        worth_winning = float(player.valuation.value(1.0)) > float(player.valuation.value(0.0))
        return 1.0 if worth_winning else 0.0

    def u(y: float) -> float:
        profile = _insert(others, i, y)
        p = float(mech.payments(profile)[i])
        if p > player.budget:
            return -INF
        return float(player.valuation.value(mech.allocate(profile)[i])) - p

    def du(y: float) -> float:
        return _utility_slope(game, mech, i, others, y)

    ybar = feasible_signal_bound(game, mech, i, s_minus_i)
    if math.isinf(ybar):
        # expand until utility stops improving at scale doublings (hard
        # absolute ceiling so divergent dynamics plateau instead of overflow)
        b = min(max(1.0, 2.0 * float(others.max())), _SIGNAL_CEILING)
        while 2.0 * b < _SIGNAL_CEILING and u(2.0 * b) > u(b):
            b *= 2.0
        ybar = min(2.0 * b, _SIGNAL_CEILING)
    if ybar <= 0:
        return 0.0

    grid = hybrid_grid(ybar, 64)
    values = np.array([u(y) for y in grid])
    k = int(np.argmax(values))
    if k == 0 and du(0.0) <= 0.0:
        return 0.0
    if k == grid.size - 1 and du(ybar) >= 0.0:
        return float(ybar)  # optimum at the budget (or search) boundary

    lo = grid[k - 1] if k > 0 else grid[0]
    hi = grid[k + 1] if k + 1 < grid.size else grid[-1]
    x, fx = golden_max(u, lo, hi, xtol=max(1e-10, 1e-12 * ybar))
    if du(lo) > 0.0 > du(hi):
        a, b = float(lo), float(hi)
        for _ in range(100):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if du(mid) > 0.0:
                a = mid
            else:
                b = mid
        y_star = 0.5 * (a + b)
        if u(y_star) >= fx - 1e-9 * (1.0 + abs(fx)):
            x, fx = y_star, u(y_star)

    best_y, best_u = x, fx
    for y, fy in ((float(grid[k]), float(values[k])), (0.0, u(0.0))):
        if fy > best_u:
            best_y, best_u = y, fy
    return float(best_y)


def _deviation_scan(game: Game, mech: Mechanism, s: np.ndarray, grid_size: int):
    """Best deviation gain over a per-player grid; returns (gain, player, signal)."""
    best_gain = -INF
    best = (0, float(s[0]))
    for i in range(game.n):
        current = utility(game, mech, s, i)
        others = np.delete(s, i)
        ybar = feasible_signal_bound(game, mech, i, others)
        if math.isinf(ybar):
            # finite cap: generous relative to the profile so divergent
            # iterates are not falsely verified
            ybar = max(1e6, 1e3 * float(s[i] + s.max()))
        for y in hybrid_grid(ybar, grid_size):
            val = utility(game, mech, _insert(others, i, float(y)), i)
            gain = val - current if current > -INF else (INF if val > -INF else -INF)
            if gain > best_gain:
                best_gain = gain
                best = (i, float(y))
    return best_gain, best[0], best[1]


def verify_equilibrium(game: Game, mech: Mechanism, s, grid_size: int = 512):
    """Scan deviations for every player; passes iff the best gain is <= 1e-7."""
    arr = as_signal_vector(s)
    gain, _, _ = _deviation_scan(game, mech, arr, grid_size)
    return bool(gain <= VERIFY_TOL), float(gain)


def classify_players(game: Game, mech: Mechanism, s) -> list[str]:
    """Tag each player at an equilibrium as A, B, Gamma, or unclassified.

    Gamma: value at the received share meets the budget.  A: positive signal
    nullifying the utility derivative with value below budget.  B: zero signal
    with strictly negative derivative and v(0) below budget.
    """
    arr = as_signal_vector(s)
    d = mech.allocate(arr)
    tags = []
    for i, pl in enumerate(game.players):
        vd = float(pl.valuation.value(d[i]))
        if vd >= pl.budget - 1e-9:
            tags.append("Gamma")
            continue
        try:
            g_slope = mech.allocation_derivative(arr, i)
            p_slope = mech.payment_derivative(arr, i)
        except SignalDomainError:
            # sole positive signaler: share and payment are locally constant
            g_slope, p_slope = 0.0, 0.0
        v_slope = pl.valuation.slope(float(d[i]))
        if math.isinf(v_slope):
            du = INF if g_slope > 0 else -p_slope
        else:
            du = v_slope * g_slope - p_slope
        if arr[i] > 0 and abs(du) <= 1e-6:
            tags.append("A")
        elif arr[i] == 0 and du < -1e-6 and float(pl.valuation.value(0.0)) < pl.budget:
            tags.append("B")
        else:
            tags.append("unclassified")
    return tags


@dataclass
class EquilibriumResult:
    """Outcome of an equilibrium search from one initial profile."""

    signals: np.ndarray
    allocation: np.ndarray
    converged: bool
    rounds: int
    max_gain: float
    classes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "signals": [float(x) for x in self.signals],
            "allocation": [float(x) for x in self.allocation],
            "converged": self.converged,
            "rounds": self.rounds,
            "max_gain": self.max_gain,
            "classes": list(self.classes),
        }


def find_equilibrium(
    game: Game,
    mech: Mechanism,
    init,
    max_rounds: int = 10_000,
    tol: float = 1e-8,
    grid_size: int = 512,
) -> EquilibriumResult:
    """Cyclic best response from init until signals stabilize, then verify.

    ``converged`` is set only when the iteration stabilized and the deviation
    scan confirms the profile (best response dynamics need not converge for
    mechanisms outside class C; the flag reports that honestly).
    """
    s = as_signal_vector(init)
    if not (s > 0).any():
        raise SignalDomainError("initial profile must have a positive entry")
    n = game.n
    rounds = 0
    stabilized = False
    best_delta = INF
    stagnant = 0
    for rounds in range(1, max_rounds + 1):
        delta = 0.0
        for i in range(n):
            y = best_response(game, mech, i, np.delete(s, i))
            delta = max(delta, abs(y - s[i]))
            s[i] = y
        if delta < tol:
            stabilized = True
            break
        # limit-cycle cutoff: 300 rounds without a new best change means the
        # dynamics orbit instead of contracting; report non-convergence early
        if delta < best_delta:
            best_delta = delta
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= 300:
                break
    if stabilized and (s > 0).any():
        verified, gain = verify_equilibrium(game, mech, s, grid_size)
    else:
        verified, gain = False, INF
    converged = stabilized and verified
    classes = classify_players(game, mech, s) if converged else ["unclassified"] * n
    return EquilibriumResult(
        signals=s.copy(),
        allocation=mech.allocate(s),
        converged=converged,
        rounds=rounds,
        max_gain=gain,
        classes=classes,
    )


def default_inits(n: int, seed: int = 0, count: int = 8) -> list[np.ndarray]:
    """Deterministic initial profiles: uniform, one-hot perturbations, random."""
    inits = [np.full(n, 1.0 / n), np.ones(n)]
    for j in range(n):
        if len(inits) >= count - 2:
            break
        hot = np.full(n, 0.05)
        hot[j] = 1.0
        inits.append(hot)
    rng = np.random.default_rng(seed)
    while len(inits) < count:
        inits.append(10.0 ** rng.uniform(-2.0, 0.0, size=n))
    return inits
