import math

import numpy as np
from django.test import SimpleTestCase

from stackelberg.services.game import (
    GameOutcome,
    ReactionMap,
    Scheme,
    check_equilibrium,
    initial_price_ceiling,
    leader_best_response,
    outcome_from_state,
    price_search_grid,
    run_direct_link,
    run_random_pricing,
    run_scheme,
    run_stackelberg,
)
from stackelberg.services.leader import optimal_price
from stackelberg.services.scenario import generate_channels, is_feasible, sum_rate, trial_rng

from .fixtures import tiny_config


def assert_feasible(test: SimpleTestCase, outcome: GameOutcome, cfg):
    test.assertTrue(outcome.feasible)
    test.assertTrue(is_feasible(outcome.W, outcome.reflection.phi, cfg))
    test.assertTrue(outcome.reflection.is_feasible(cfg.solver.tol_feas))
    test.assertTrue(math.isfinite(outcome.bs_utility))
    test.assertGreaterEqual(outcome.irs_utility, 0.0)
    test.assertAlmostEqual(outcome.bs_utility, outcome.sum_rate - outcome.irs_utility, places=12)


class DirectLinkTests(SimpleTestCase):
    def setUp(self):
        self.cfg = tiny_config()
        self.ch = generate_channels(self.cfg, trial_rng(101, 0))

    def test_no_reflection(self):
        outcome = run_direct_link(self.ch, self.cfg)
        self.assertEqual(outcome.scheme, Scheme.DIRECT_LINK)
        self.assertEqual(outcome.irs_utility, 0.0)
        self.assertEqual(outcome.triggered, 0)
        self.assertFalse(np.any(outcome.reflection.phi))
        self.assertEqual(outcome.bs_utility, outcome.sum_rate)
        self.assertAlmostEqual(
            outcome.sum_rate,
            sum_rate(self.ch.direct_only(), outcome.W, np.zeros(0), self.cfg.noise_power),
            places=12,
        )
        assert_feasible(self, outcome, self.cfg)

    def test_single_user_reaches_mrt_rate(self):
        cfg = tiny_config(num_users=1, num_antennas=3)
        ch = generate_channels(cfg, trial_rng(102, 0))
        outcome = run_direct_link(ch, cfg)
        snr = cfg.max_power * np.linalg.norm(ch.Hd[0]) ** 2 / cfg.noise_power
        self.assertAlmostEqual(outcome.sum_rate, math.log2(1 + snr), delta=1e-6)


class StackelbergTests(SimpleTestCase):
    def setUp(self):
        self.cfg = tiny_config()
        self.ch = generate_channels(self.cfg, trial_rng(111, 0))

    def test_without_modules_equals_direct_link(self):
        cfg = tiny_config(num_modules=0)
        ch = generate_channels(cfg, trial_rng(112, 0))
        game = run_stackelberg(ch, cfg)
        direct = run_direct_link(ch, cfg)
        self.assertEqual(game.scheme, Scheme.STACKELBERG)
        self.assertEqual(game.bs_utility, direct.bs_utility)
        self.assertTrue(np.array_equal(game.W, direct.W))
        self.assertEqual(game.irs_utility, 0.0)

    def test_outcome_is_feasible(self):
        outcome = run_stackelberg(self.ch, self.cfg, check=False)
        assert_feasible(self, outcome, self.cfg)
        self.assertGreater(outcome.price, 0.0)
        self.assertLessEqual(outcome.triggered, self.cfg.num_modules)
        self.assertGreaterEqual(outcome.outer_iterations, 1)
        self.assertLessEqual(outcome.outer_iterations, self.cfg.solver.max_outer)
        self.assertEqual(outcome.x_norms.shape, (self.cfg.num_modules,))

    def test_deterministic(self):
        first = run_stackelberg(self.ch, self.cfg, check=False)
        second = run_stackelberg(self.ch, self.cfg, check=False)
        self.assertEqual(first.price, second.price)
        self.assertEqual(first.bs_utility, second.bs_utility)
        self.assertEqual(first.irs_utility, second.irs_utility)
        self.assertTrue(np.array_equal(first.W, second.W))
        self.assertTrue(np.array_equal(first.reflection.phi, second.reflection.phi))

    def test_tiny_budget_leaves_almost_no_rate(self):
        cfg = tiny_config(max_power=1e-9)
        outcome = run_stackelberg(generate_channels(cfg, trial_rng(113, 0)), cfg, check=False)
        self.assertLess(outcome.sum_rate, 1e-3)
        assert_feasible(self, outcome, cfg)

    def test_price_is_a_fixed_point_of_the_leader(self):
        cfg = tiny_config(solver={"max_outer": 25})
        for seed in (111, 114, 115):
            with self.subTest(seed=seed):
                ch = generate_channels(cfg, trial_rng(seed, 0))
                outcome = run_stackelberg(ch, cfg, check=False)
                self.assertTrue(outcome.outer_converged)
                reactions = ReactionMap(ch, cfg)
                self.assertEqual(reactions(outcome.price).irs_utility, outcome.irs_utility)
                again = leader_best_response(reactions, [outcome.price])
                self.assertLessEqual(
                    again.irs_utility, outcome.irs_utility * (1 + cfg.solver.tol_outer) + 1e-15,
                )

    def test_closed_form_price_never_beats_the_outcome(self):
        outcome = run_stackelberg(self.ch, self.cfg, check=False)
        if not np.any(outcome.x_norms > 0):
            return
        closed_form = optimal_price(outcome.x_norms, self.cfg.solver.penalty, self.cfg.balance_alpha)
        reaction = ReactionMap(self.ch, self.cfg)(closed_form)
        self.assertLessEqual(
            reaction.irs_utility, outcome.irs_utility * (1 + self.cfg.solver.tol_outer) + 1e-15,
        )

    def test_no_scanned_price_pays_the_leader_more(self):
        outcome = run_stackelberg(self.ch, self.cfg, check=False)
        reactions = ReactionMap(self.ch, self.cfg)
        for price in price_search_grid(self.ch, self.cfg):
            self.assertLessEqual(
                reactions(price).irs_utility, outcome.irs_utility * (1 + self.cfg.solver.tol_outer) + 1e-15,
            )

    def test_never_worse_for_the_bs_than_the_direct_link(self):
        for seed in range(150, 155):
            with self.subTest(seed=seed):
                ch = generate_channels(self.cfg, trial_rng(seed, 0))
                direct = run_direct_link(ch, self.cfg).bs_utility
                game = run_stackelberg(ch, self.cfg, check=False)
                priced = run_random_pricing(ch, self.cfg, trial_rng(seed, 0, 1))
                self.assertGreaterEqual(game.bs_utility, direct - 1e-6)
                self.assertGreaterEqual(priced.bs_utility, direct - 1e-6)

    def test_cold_starts_reach_the_same_outcome(self):
        cold_cfg = tiny_config(solver={"warm_start": False})
        warm = run_stackelberg(self.ch, self.cfg, check=False)
        cold = run_stackelberg(self.ch, cold_cfg, check=False)
        scanned = leader_best_response(ReactionMap(self.ch, self.cfg))
        for outcome in (warm, cold):
            self.assertLessEqual(
                scanned.irs_utility, outcome.irs_utility * (1 + self.cfg.solver.tol_outer) + 1e-15,
            )
        reactions = ReactionMap(self.ch, cold_cfg)
        self.assertEqual(reactions(warm.price).irs_utility, warm.irs_utility)
        self.assertEqual(reactions(warm.price).bs_utility, warm.bs_utility)

    def test_price_state_describes_the_final_price(self):
        outcome = run_stackelberg(self.ch, self.cfg, check=False)
        state = outcome.price_state
        self.assertEqual(state.price, outcome.price)
        self.assertEqual(state.x_norms, tuple(outcome.x_norms.tolist()))
        expected = [int(n > outcome.price * self.cfg.balance_alpha) for n in outcome.x_norms]
        self.assertEqual(list(state.kappa), expected)
        self.assertEqual(outcome.as_dict()["price_state"]["kappa"], expected)

    def test_equilibrium_report_is_attached(self):
        outcome = run_stackelberg(self.ch, self.cfg, check=True, rng=np.random.default_rng(5))
        report = outcome.equilibrium
        self.assertIsNotNone(report)
        self.assertTrue(math.isfinite(report.follower_max_gain))
        self.assertTrue(math.isfinite(report.leader_max_gain))
        self.assertIn("equilibrium", outcome.as_dict())


class EquilibriumCheckTests(SimpleTestCase):
    def setUp(self):
        self.cfg = tiny_config()
        for seed in range(111, 119):
            self.ch = generate_channels(self.cfg, trial_rng(seed, 0))
            self.outcome = run_stackelberg(self.ch, self.cfg, check=False)
            if self.outcome.irs_utility > 0.0:
                break
        self.assertGreater(self.outcome.irs_utility, 0.0, "no draw where the leader earns anything")

    def test_outcome_passes_on_the_leader_scan(self):
        report = check_equilibrium(self.outcome, self.ch, self.cfg, np.random.default_rng(0), grid_points=2)
        self.assertTrue(report.leader_ok)
        self.assertLessEqual(report.leader_max_gain, self.cfg.solver.tol_outer * self.outcome.irs_utility + 1e-15)

    def test_detects_a_price_the_leader_would_leave(self):
        reactions = ReactionMap(self.ch, self.cfg)
        reactions(self.outcome.price)
        cheap = reactions(self.outcome.price * 1e-3)
        report = check_equilibrium(cheap, self.ch, self.cfg, np.random.default_rng(0), reactions=reactions)
        self.assertFalse(report.leader_ok)
        self.assertGreaterEqual(report.leader_max_gain, self.outcome.irs_utility - cheap.irs_utility - 1e-15)

    def test_detects_a_follower_that_could_do_better(self):
        direct = run_direct_link(self.ch, self.cfg)
        W = 0.5 * direct.W
        idle = outcome_from_state(Scheme.STACKELBERG, self.ch, self.cfg, W, direct.reflection.phi, 0.0)
        report = check_equilibrium(idle, self.ch, self.cfg, np.random.default_rng(0), reactions=ReactionMap(self.ch, self.cfg))
        self.assertFalse(report.follower_ok)
        self.assertGreater(report.follower_max_gain, 0.0)


class RandomPricingTests(SimpleTestCase):
    def setUp(self):
        self.cfg = tiny_config()
        self.ch = generate_channels(self.cfg, trial_rng(131, 0))

    def test_prohibitive_prices_trigger_nothing(self):
        outcome = run_random_pricing(self.ch, self.cfg, np.random.default_rng(1), r_max=1e12)
        self.assertGreater(outcome.price, 1e6)
        self.assertEqual(outcome.triggered, 0)
        self.assertEqual(outcome.irs_utility, 0.0)

    def test_same_stream_same_outcome(self):
        first = run_random_pricing(self.ch, self.cfg, trial_rng(7, 0, 1))
        second = run_random_pricing(self.ch, self.cfg, trial_rng(7, 0, 1))
        self.assertEqual(first.price, second.price)
        self.assertEqual(first.bs_utility, second.bs_utility)
        self.assertLessEqual(first.price, initial_price_ceiling(self.ch, self.cfg))
        assert_feasible(self, first, self.cfg)


class RunSchemeTests(SimpleTestCase):
    def test_dispatch_by_name(self):
        cfg = tiny_config()
        ch = generate_channels(cfg, trial_rng(141, 0))
        outcome = run_scheme("direct-link", ch, cfg, np.random.default_rng(0))
        self.assertEqual(outcome.scheme, Scheme.DIRECT_LINK)
        data = outcome.as_dict()
        self.assertEqual(data["scheme"], "direct-link")
        self.assertEqual(len(data["phi"]), cfg.total_elements)
        self.assertEqual(data["phi"][0], [0.0, 0.0])
        self.assertTrue(data["feasible"])
        self.assertNotIn("equilibrium", data)
        self.assertNotIn("price_state", data)

    def test_sweeps_skip_the_equilibrium_check(self):
        cfg = tiny_config()
        ch = generate_channels(cfg, trial_rng(142, 0))
        self.assertIsNone(run_scheme("stackelberg", ch, cfg, np.random.default_rng(0)).equilibrium)
