"""Actor-critic internals: gradient checks, targets, buffer bookkeeping."""
import numpy as np
import pytest

from gridwall.nets import Mlp
from gridwall.sac import (
    ReplayBuffer,
    SacLearner,
    SacSettings,
    actor_loss,
    actor_loss_grads,
    critic_forward,
    critic_loss,
    critic_loss_grads,
    head_sample,
)


def flat(grads_w, grads_b):
    parts = []
    for w, b in zip(grads_w, grads_b):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def fd_gradient(loss_fn, net: Mlp, h: float = 1e-6) -> np.ndarray:
    """Central finite differences over every parameter of `net`."""
    p0 = net.get_flat()
    g = np.zeros_like(p0)
    for i in range(p0.size):
        step = h * max(1.0, abs(p0[i]))
        p = p0.copy()
        p[i] = p0[i] + step
        net.set_flat(p)
        hi = loss_fn()
        p[i] = p0[i] - step
        net.set_flat(p)
        lo = loss_fn()
        g[i] = (hi - lo) / (2.0 * step)
    net.set_flat(p0)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


class TestGradientChecks:
    """Analytic gradients vs central differences, float64, rel err <= 1e-4."""

    def setup_method(self):
        rng = np.random.default_rng(0)
        self.obs_dim, self.act_dim, self.batch = 6, 3, 16
        self.actor = Mlp([self.obs_dim, 8, 8, 2 * self.act_dim], rng=rng, dtype=np.float64)
        self.q1 = Mlp([self.obs_dim + self.act_dim, 8, 8, 1], rng=rng, dtype=np.float64)
        self.q2 = Mlp([self.obs_dim + self.act_dim, 8, 8, 1], rng=rng, dtype=np.float64)
        self.obs = rng.standard_normal((self.batch, self.obs_dim))
        self.act = np.tanh(rng.standard_normal((self.batch, self.act_dim)))
        self.y = rng.standard_normal(self.batch)
        self.eps = rng.standard_normal((self.batch, self.act_dim))

    def test_critic_gradient(self):
        _, dw, db = critic_loss_grads(self.q1, self.obs, self.act, self.y)
        analytic = flat(dw, db)
        fd = fd_gradient(lambda: critic_loss(self.q1, self.obs, self.act, self.y), self.q1)
        assert rel_err(analytic, fd) <= 1e-4

    def test_actor_gradient(self):
        _, dw, db, _ = actor_loss_grads(
            self.actor, self.q1, self.q2, self.obs, self.eps, alpha=0.37, bound=1.0
        )
        analytic = flat(dw, db)
        fd = fd_gradient(
            lambda: actor_loss(
                self.actor, self.q1, self.q2, self.obs, self.eps, alpha=0.37, bound=1.0
            ),
            self.actor,
        )
        assert rel_err(analytic, fd) <= 1e-4

    def test_actor_gradient_with_correction_bound(self):
        _, dw, db, _ = actor_loss_grads(
            self.actor, self.q1, self.q2, self.obs, self.eps, alpha=0.05, bound=0.5
        )
        analytic = flat(dw, db)
        fd = fd_gradient(
            lambda: actor_loss(
                self.actor, self.q1, self.q2, self.obs, self.eps, alpha=0.05, bound=0.5
            ),
            self.actor,
        )
        assert rel_err(analytic, fd) <= 1e-4


class TestHead:
    def test_action_bounded(self):
        rng = np.random.default_rng(1)
        out = rng.standard_normal((200, 6)) * 5
        eps = rng.standard_normal((200, 3))
        hs = head_sample(out, eps, bound=1.0)
        assert np.all(np.abs(hs.action) <= 1.0)

    def test_zero_output_gives_zero_mean_action(self):
        hs = head_sample(np.zeros((1, 6)), np.zeros((1, 3)), bound=1.0)
        assert np.allclose(hs.action, 0.0)

    def test_log_prob_matches_gaussian_plus_jacobian(self):
        # cross-check the stable formula against the naive one
        rng = np.random.default_rng(2)
        out = rng.standard_normal((50, 6))
        eps = rng.standard_normal((50, 3))
        hs = head_sample(out, eps, bound=1.0)
        naive = (
            -0.5 * eps**2
            - hs.log_std
            - 0.5 * np.log(2 * np.pi)
            - np.log(1.0 - hs.tanh_u**2 + 1e-300)
        ).sum(axis=-1)
        assert np.allclose(hs.log_prob, naive, atol=1e-8)


class TestTargets:
    def test_terminal_target_equals_reward(self):
        # with gamma = 1 and done = 1, the bootstrap term must vanish exactly
        rng = np.random.default_rng(3)
        actor = Mlp([4, 8, 8, 4], rng=rng, dtype=np.float64)
        learner = SacLearner(
            actor, obs_dim=4, act_dim=2, bound=1.0,
            settings=SacSettings(), rng=rng, hidden=(8, 8),
        )
        rew = np.array([3.5, -2.0])
        next_obs = rng.standard_normal((2, 4))
        done = np.array([1.0, 1.0])
        y = learner.targets(rew, next_obs, done)
        assert np.array_equal(y, rew)

    def test_nonterminal_target_bootstraps(self):
        rng = np.random.default_rng(4)
        actor = Mlp([4, 8, 8, 4], rng=rng, dtype=np.float64)
        learner = SacLearner(
            actor, obs_dim=4, act_dim=2, bound=1.0,
            settings=SacSettings(), rng=rng, hidden=(8, 8),
        )
        rew = np.zeros(2)
        next_obs = rng.standard_normal((2, 4))
        y = learner.targets(rew, next_obs, np.zeros(2))
        assert not np.allclose(y, 0.0)


class TestReplayBuffer:
    def test_ring_overwrite(self):
        buf = ReplayBuffer(capacity=4, obs_dim=2, act_dim=1)
        for i in range(6):
            buf.add([i, i], [i], float(i), [i + 1, i + 1], False)
        assert buf.size == 4
        assert set(buf.rew.tolist()) == {2.0, 3.0, 4.0, 5.0}

    def test_done_flags_consistent(self):
        # episode boundaries: done transitions keep their flag through sampling
        buf = ReplayBuffer(capacity=100, obs_dim=2, act_dim=1)
        for ep in range(5):
            for k in range(10):
                buf.add([ep, k], [0.0], 0.0, [ep, k + 1], k == 9)
        rng = np.random.default_rng(0)
        obs, _, _, _, done = buf.sample(64, rng)
        for o, d in zip(obs, done):
            assert d == (1.0 if o[1] == 9 else 0.0)


class TestLearnerUpdate:
    def test_update_runs_and_moves_parameters(self):
        rng = np.random.default_rng(5)
        actor = Mlp([4, 8, 8, 4], rng=rng, dtype=np.float32)
        learner = SacLearner(
            actor, obs_dim=4, act_dim=2, bound=1.0,
            settings=SacSettings(), rng=rng, hidden=(8, 8),
        )
        before = actor.get_flat().copy()
        batch = (
            rng.standard_normal((32, 4)).astype(np.float32),
            np.tanh(rng.standard_normal((32, 2))).astype(np.float32),
            rng.standard_normal(32).astype(np.float32),
            rng.standard_normal((32, 4)).astype(np.float32),
            np.zeros(32, dtype=np.float32),
        )
        metrics = learner.update(batch)
        assert np.isfinite(metrics["critic_loss"])
        assert np.isfinite(metrics["actor_loss"])
        assert not np.array_equal(before, actor.get_flat())

    def test_deterministic_given_seed(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(6)
            actor = Mlp([4, 8, 8, 4], rng=rng, dtype=np.float32)
            learner = SacLearner(
                actor, obs_dim=4, act_dim=2, bound=1.0,
                settings=SacSettings(), rng=rng, hidden=(8, 8),
            )
            batch_rng = np.random.default_rng(7)
            for _ in range(20):
                batch = (
                    batch_rng.standard_normal((16, 4)).astype(np.float32),
                    np.tanh(batch_rng.standard_normal((16, 2))).astype(np.float32),
                    batch_rng.standard_normal(16).astype(np.float32),
                    batch_rng.standard_normal((16, 4)).astype(np.float32),
                    np.zeros(16, dtype=np.float32),
                )
                learner.update(batch)
            results.append(actor.get_flat().copy())
        assert np.array_equal(results[0], results[1])
