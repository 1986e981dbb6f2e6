"""Shared samplers and brute-force oracles for the test suite."""

import numpy as np
import pytest

from arena import INF, Game, Player, Valuation


def random_game(rng, n):
    """Random concave game with mixed valuation families and budgets."""
    players = []
    for _ in range(n):
        fam = rng.integers(0, 3)
        if fam == 0:
            v = Valuation.affine(rng.uniform(0.3, 1.8), rng.uniform(0.0, 0.4))
        elif fam == 1:
            v = Valuation.power(rng.uniform(0.4, 1.8), rng.uniform(0.5, 1.0))
        else:
            v = Valuation.log(rng.uniform(0.4, 1.8), rng.uniform(0.5, 2.0))
        budget = INF if rng.random() < 0.4 else rng.uniform(0.1, 1.2)
        players.append(Player(v, budget))
    return Game(players)


def grid_optimum(game, step=1e-3):
    """Exhaustive liquid-welfare maximum over the simplex grid (n <= 3)."""
    n = game.n
    xs = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    if n == 2:
        shares = (xs, 1.0 - xs)
        total = np.zeros_like(xs)
        for pl, x in zip(game.players, shares):
            total += np.minimum(pl.valuation.value(x), pl.budget)
        return float(total.max())
    if n == 3:
        x1, x2 = np.meshgrid(xs, xs, indexing="ij")
        mask = (x1 + x2) <= 1.0 + 1e-12
        x3 = np.clip(1.0 - x1 - x2, 0.0, None)
        total = np.zeros_like(x1)
        for pl, x in zip(game.players, (x1, x2, x3)):
            total += np.minimum(pl.valuation.value(x), pl.budget)
        return float(total[mask].max())
    raise ValueError("grid oracle supports n <= 3")


def gauss_legendre_01(f, nodes=32):
    """Fixed-order Gauss-Legendre quadrature of f over [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    return float(0.5 * np.sum(w * np.array([f(ti) for ti in t])))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
