import math

import numpy as np
import pytest

from arena import (
    INF,
    DegeneratePointError,
    Game,
    Player,
    SearchConfig,
    Valuation,
    affinize,
    classify_players,
    default_inits,
    delta_diagnostic,
    game_lpoa,
    get_mechanism,
    lambda_coefficient,
    liquid_welfare,
    lower_bound_witness,
    lpoa_upper_scan,
    master_ratio,
    optimal_liquid_welfare,
    ratio_grid,
    solve_constants,
    theorem1_games,
)


def linear_game(slopes, budgets):
    return Game([Player(Valuation.affine(a), c) for a, c in zip(slopes, budgets)])


class TestLambda:
    def test_kelly(self):
        assert lambda_coefficient(get_mechanism("kelly"), [1, 1], 0) == pytest.approx(4.0)

    def test_sh_two_player(self):
        # low-signal branch gives lambda = 2 * s2
        assert lambda_coefficient(get_mechanism("sh"), [1, 2], 0) == pytest.approx(4.0)

    def test_e2sr_symmetric(self):
        gamma = solve_constants().gamma
        expected = (gamma - 1.0) * math.exp(gamma / (2.0 * (gamma - 1.0)))
        got = lambda_coefficient(get_mechanism("e2sr"), [1, 1], 0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_degenerate_profile(self):
        with pytest.raises(DegeneratePointError):
            lambda_coefficient(get_mechanism("kelly"), [0.0, 1.0], 0)


class TestAffinize:
    def test_kelly_symmetric(self):
        aff = affinize(get_mechanism("kelly"), [1.0, 1.0], 0)
        p0, p1 = aff.game.players
        assert p0.valuation.a == pytest.approx(4.0) and p0.valuation.b == 0.0
        assert p0.budget == INF
        assert p1.valuation.a == pytest.approx(4.0) and p1.valuation.b == pytest.approx(1.0)
        assert p1.budget == pytest.approx(1.0)

    def test_small_signal_limit(self):
        for eps in (1e-2, 1e-4, 1e-6):
            aff = affinize(get_mechanism("kelly"), [eps, 1.0], 0)
            assert aff.game.players[0].valuation.a == pytest.approx((eps + 1.0) ** 2, rel=1e-9)

    def test_pys_budgets_are_signals(self, rng):
        for name in ("kelly", "sh"):
            mech = get_mechanism(name)
            s = 10.0 ** rng.uniform(-1, 1, 3)
            aff = affinize(mech, s, 0)
            for i in (1, 2):
                assert aff.game.players[i].budget == pytest.approx(s[i])


class TestMasterRatio:
    def test_kelly_symmetric(self):
        assert master_ratio(get_mechanism("kelly"), [1, 1]) == pytest.approx(5 / 3, abs=1e-12)

    def test_kelly_near_supremum(self):
        assert master_ratio(get_mechanism("kelly"), [1e-6, 1.0]) == pytest.approx(2.0, abs=1e-10)

    def test_kelly_closed_form(self, rng):
        kelly = get_mechanism("kelly")
        for _ in range(200):
            s1, c = 10.0 ** rng.uniform(-4, 4, 2)
            got = master_ratio(kelly, [s1, c])
            expected = 2.0 - s1**2 / (c**2 + s1 * c + s1**2)
            assert got == pytest.approx(expected, abs=1e-10)

    def test_e2pys_low_branch_is_beta(self, rng):
        beta = solve_constants().beta
        mech = get_mechanism("e2pys")
        for _ in range(100):
            s2 = 10.0 ** rng.uniform(-2, 2)
            s1 = s2 * rng.uniform(1e-6, 1.0)
            assert master_ratio(mech, [s1, s2]) == pytest.approx(beta, abs=1e-9)

    def test_e2pys_high_branch_below_beta(self, rng):
        beta = solve_constants().beta
        mech = get_mechanism("e2pys")
        for _ in range(100):
            s2 = 10.0 ** rng.uniform(-2, 2)
            s1 = s2 * 10.0 ** rng.uniform(0.0, 4.0)
            assert master_ratio(mech, [s1, s2]) <= beta + 1e-9

    def test_e2sr_branches(self, rng):
        gamma = solve_constants().gamma
        mech = get_mechanism("e2sr")
        for _ in range(100):
            s2 = 10.0 ** rng.uniform(-2, 2)
            low = master_ratio(mech, [s2 * rng.uniform(1e-6, 1.0), s2])
            high = master_ratio(mech, [s2 * 10.0 ** rng.uniform(0.0, 4.0), s2])
            assert low == pytest.approx(gamma, abs=1e-9)
            assert high <= gamma + 1e-9

    def test_welfare_route_cross_check(self, rng):
        # master ratio must equal LW*(G(s,1)) / LW(g(s), G(s,1))
        names = ("kelly", "sh", "e2pys", "e2sr", "shr", "mb")
        for t in range(60):
            mech = get_mechanism(names[t % len(names)])
            n = 2 if mech.arity == 2 else int(rng.integers(2, 6))
            s = 10.0 ** rng.uniform(-3, 3, n)
            aff = affinize(mech, s, 0)
            _, lw_opt = optimal_liquid_welfare(aff.game)
            lw_eq = liquid_welfare(aff.game, mech.allocate(s))
            assert master_ratio(mech, s) == pytest.approx(lw_opt / lw_eq, abs=1e-9)

    def test_degenerate_profile_rejected(self):
        with pytest.raises(DegeneratePointError):
            master_ratio(get_mechanism("kelly"), [1.0, 0.0])


class TestUpperScan:
    def test_kelly_two_players(self):
        res = lpoa_upper_scan(get_mechanism("kelly"), 2)
        assert 1.999 <= res.sup_estimate <= 2.0 + 1e-9
        assert res.sup_estimate == pytest.approx(
            master_ratio(get_mechanism("kelly"), res.argmax), abs=1e-12
        )

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_sh_never_exceeds_three(self, n):
        res = lpoa_upper_scan(get_mechanism("sh"), n, SearchConfig(ratio_points=200))
        assert res.sup_estimate <= 3.0 + 1e-9

    def test_shr_peak_at_golden_ratio(self):
        phi = solve_constants().phi
        res = lpoa_upper_scan(get_mechanism("shr"), 2)
        assert res.sup_estimate == pytest.approx(phi, abs=1e-6)
        assert res.argmax[1] / res.argmax[0] == pytest.approx(phi, abs=1e-4)

    def test_ratio_grid_rows(self):
        rows = ratio_grid(get_mechanism("kelly"), 2, np.geomspace(1e-6, 1e6, 50))
        assert len(rows) == 50
        assert all(val < 2.0 for _, val in rows)

    def test_thread_count_does_not_change_results(self, monkeypatch):
        cfg = SearchConfig(ratio_points=60, random_profiles=32)
        serial = lpoa_upper_scan(get_mechanism("kelly"), 2, cfg)
        monkeypatch.setenv("ARENA_THREADS", "4")
        threaded = lpoa_upper_scan(get_mechanism("kelly"), 2, cfg)
        assert serial.sup_estimate == threaded.sup_estimate
        assert np.array_equal(serial.argmax, threaded.argmax)


class TestWitness:
    def test_sh_certificate(self):
        rep = lower_bound_witness(get_mechanism("sh"), [1e-3, 1.0])
        assert rep.certified
        assert rep.ratio == pytest.approx(3.0 / 1.001, rel=1e-12)

    def test_kelly_certificate(self):
        rep = lower_bound_witness(get_mechanism("kelly"), [1e-4, 1.0])
        assert rep.certified
        assert rep.ratio == pytest.approx(2.0, abs=1e-6)

    def test_e2sr_witness_failure_reports_deviation(self):
        rep = lower_bound_witness(get_mechanism("e2sr"), [0.1, 1.0])
        assert not rep.certified
        assert rep.deviation is not None and rep.deviation["gain"] > 1e-7

    def test_e2pys_convex_patch_counterexample(self):
        # the high-signal branch of the allocation has a convex patch on
        # (s2, k*s2/2), k = beta/(beta-1) > 2, so the generating profile of
        # the affinized game admits a real improving deviation near the
        # diagonal; pin the counterexample so the behavior stays visible
        rep = lower_bound_witness(get_mechanism("e2pys"), [1.0, 1.0])
        assert not rep.certified
        assert 2e-3 < rep.max_gain < 5e-3

    def test_e2pys_certificate_off_the_diagonal(self):
        beta = solve_constants().beta
        rep = lower_bound_witness(get_mechanism("e2pys"), [0.3, 1.0])
        assert rep.certified
        assert rep.ratio == pytest.approx(beta, abs=1e-9)


class TestGameLpoa:
    def test_symmetric_linear_is_efficient(self):
        g = linear_game([1.0, 1.0], [INF, INF])
        res = game_lpoa(g, get_mechanism("kelly"), default_inits(2))
        assert res.value == pytest.approx(1.0, abs=1e-9)

    def test_theorem1_pair_game(self):
        g2 = Game([
            Player(Valuation.affine(1.0), INF),
            Player(Valuation.affine(1.0, 0.5), 0.5),
        ])
        res = game_lpoa(g2, get_mechanism("kelly"), default_inits(2))
        assert res.value == pytest.approx(1.5, abs=1e-6)

    def test_affinized_kelly_matches_master_ratio(self):
        aff = affinize(get_mechanism("kelly"), [1.0, 1.0], 0)
        res = game_lpoa(aff.game, get_mechanism("kelly"), default_inits(2))
        assert res.value == pytest.approx(5 / 3, abs=1e-6)

    def test_no_equilibrium_result(self):
        g = linear_game([8.0, 8.0], [INF, INF])
        res = game_lpoa(g, get_mechanism("e2sr"), default_inits(2))
        assert res.value is None and not res.equilibria


class TestDeltaDiagnostic:
    def test_theorem1_pair_at_exact_equilibrium(self):
        g2 = Game([
            Player(Valuation.affine(1.0), INF),
            Player(Valuation.affine(1.0, 0.5), 0.5),
        ])
        x_opt, _ = optimal_liquid_welfare(g2)
        rep = delta_diagnostic(g2, get_mechanism("kelly"), [0.25, 0.25], x_opt)
        assert rep.applicable and rep.pivot == 0
        assert rep.total <= 0.0
        assert rep.classes == ["A", "Gamma"]

    def test_symmetric_linear_game(self):
        g = linear_game([1.0, 1.0], [INF, INF])
        x_opt, _ = optimal_liquid_welfare(g)
        rep = delta_diagnostic(g, get_mechanism("kelly"), [0.25, 0.25], x_opt)
        assert rep.applicable
        assert rep.classes == ["A", "A"]
        assert rep.total <= 1e-9

    def test_all_capped_not_applicable(self):
        g = Game([
            Player(Valuation.affine(4.0), 0.5),
            Player(Valuation.affine(4.0), 0.5),
        ])
        x_opt, _ = optimal_liquid_welfare(g)
        rep = delta_diagnostic(g, get_mechanism("kelly"), [0.25, 0.25], x_opt)
        assert not rep.applicable and "capped" in rep.reason

    def test_one_hot_equilibrium_not_applicable(self):
        g = Game([Player(Valuation.affine(1.0), INF), Player(Valuation.affine(0.0), INF)])
        x_opt, _ = optimal_liquid_welfare(g)
        rep = delta_diagnostic(g, get_mechanism("kelly"), [1.0, 0.0], x_opt)
        assert not rep.applicable


class TestLemma3Inequality:
    def test_corpus(self):
        # curated games where small sweeps make the equilibrium set plausibly
        # complete: the welfare gap never exceeds the master ratio at the
        # worst equilibrium with the argmax-lambda pivot
        kelly = get_mechanism("kelly")
        corpus = [
            linear_game([1.0, 1.0], [INF, INF]),
            linear_game([1.0, 1.0, 1.0], [INF, INF, INF]),
            Game([
                Player(Valuation.affine(1.0), INF),
                Player(Valuation.affine(1.0, 0.5), 0.5),
            ]),
            affinize(kelly, [1.0, 1.0], 0).game,
            theorem1_games(kelly, 3).game2,
        ]
        for game in corpus:
            res = game_lpoa(game, kelly, default_inits(game.n))
            assert res.value is not None
            usable = [
                (lw, eq) for lw, eq in zip(res.lw_values, res.equilibria)
                if (eq.signals > 0).sum() >= 2
            ]
            lw_worst, eq_worst = min(usable, key=lambda t: t[0])
            classes = classify_players(game, kelly, eq_worst.signals)
            ab = [i for i, c in enumerate(classes) if c in ("A", "B")]
            assert ab, classes
            lams = {i: lambda_coefficient(kelly, eq_worst.signals, i) for i in ab}
            pivot = min(ab, key=lambda i: (-lams[i], i))
            bound = master_ratio(kelly, eq_worst.signals, pivot=pivot)
            assert res.lw_opt / lw_worst <= bound + 1e-7
