"""Entropy-regularized off-policy actor-critic on numpy networks.

Twin critics with target networks, a squashed-Gaussian actor head and
automatic temperature tuning. Everything is written against the Mlp
forward/backward primitives so analytic gradients can be checked against
finite differences in float64.

The actor network outputs 2 * act_dim values: means first, then pre-clamp
log-stds. Log-std is soft-clamped with a tanh so the loss stays smooth.
Actions are bound * tanh(mu + std * eps); log-probabilities include the
exact tanh-squash correction in a numerically stable form.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, Mlp

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass
class HeadSample:
    """Intermediate tensors of a squashed-Gaussian head evaluation."""

    mu: np.ndarray
    pre: np.ndarray
    log_std: np.ndarray
    std: np.ndarray
    u: np.ndarray
    tanh_u: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray  # per-sample scalar


def head_sample(out: np.ndarray, eps: np.ndarray, bound: float) -> HeadSample:
    """Evaluate the stochastic head for network output `out` and noise `eps`."""
    act_dim = eps.shape[-1]
    mu = out[..., :act_dim]
    pre = out[..., act_dim:]
    mid = 0.5 * (LOG_STD_MIN + LOG_STD_MAX)
    half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
    tanh_pre = np.tanh(pre)
    log_std = mid + half * tanh_pre
    std = np.exp(log_std)
    u = mu + std * eps
    tanh_u = np.tanh(u)
    action = bound * tanh_u
    # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), exact and stable
    log_jac = 2.0 * (_LOG_2 - u - _softplus(-2.0 * u)) + np.log(bound)
    log_prob = (
        -0.5 * eps * eps - log_std - 0.5 * _LOG_2PI - log_jac
    ).sum(axis=-1)
    return HeadSample(mu, pre, log_std, std, u, tanh_u, action, log_prob)


def head_backward(
    hs: HeadSample, d_logprob: np.ndarray, d_action: np.ndarray, bound: float
) -> np.ndarray:
    """Backprop through the head to the network output.

    d_logprob: (B,) gradient w.r.t. each sample's log-probability.
    d_action: (B, A) gradient w.r.t. the squashed action.
    Returns the (B, 2A) gradient w.r.t. the raw network output.
    """
    d_lp = d_logprob[..., None]
    # d log_prob / du = 2 tanh(u); direct log_std term contributes -1
    du = d_lp * (2.0 * hs.tanh_u) + d_action * bound * (1.0 - hs.tanh_u**2)
    d_mu = du
    # du/dlog_std = std * eps = u - mu
    d_log_std = du * (hs.u - hs.mu) - d_lp
    half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
    tanh_pre = np.tanh(hs.pre)
    d_pre = d_log_std * half * (1.0 - tanh_pre**2)
    return np.concatenate([d_mu, d_pre], axis=-1)


# ---- losses (forward-only versions are used by finite-difference checks) --


def critic_forward(q: Mlp, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
    return q.forward(np.concatenate([obs, act], axis=-1))[:, 0]


def critic_loss(q: Mlp, obs: np.ndarray, act: np.ndarray, target: np.ndarray) -> float:
    diff = critic_forward(q, obs, act) - target
    return float(np.mean(diff * diff))


def critic_loss_grads(
    q: Mlp, obs: np.ndarray, act: np.ndarray, target: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    x = np.concatenate([obs, act], axis=-1)
    y, cache = q.forward_cache(x)
    diff = y[:, 0] - target
    loss = float(np.mean(diff * diff))
    dy = np.zeros_like(y)
    dy[:, 0] = 2.0 * diff / diff.shape[0]
    dw, db, _ = q.backward(cache, dy)
    return loss, dw, db


def actor_loss(
    actor: Mlp,
    q1: Mlp,
    q2: Mlp,
    obs: np.ndarray,
    eps: np.ndarray,
    alpha: float,
    bound: float,
) -> float:
    out = actor.forward(obs)
    hs = head_sample(out, eps, bound)
    qmin = np.minimum(
        critic_forward(q1, obs, hs.action), critic_forward(q2, obs, hs.action)
    )
    return float(np.mean(alpha * hs.log_prob - qmin))


def actor_loss_grads(
    actor: Mlp,
    q1: Mlp,
    q2: Mlp,
    obs: np.ndarray,
    eps: np.ndarray,
    alpha: float,
    bound: float,
) -> tuple[float, list[np.ndarray], list[np.ndarray], float]:
    """Returns (loss, weight grads, bias grads, mean log-prob)."""
    out, cache = actor.forward_cache(obs)
    hs = head_sample(out, eps, bound)
    batch = obs.shape[0]

    x = np.concatenate([obs, hs.action], axis=-1)
    ya, cache_a = q1.forward_cache(x)
    yb, cache_b = q2.forward_cache(x)
    qa, qb = ya[:, 0], yb[:, 0]
    qmin = np.minimum(qa, qb)
    loss = float(np.mean(alpha * hs.log_prob - qmin))

    # route -1/B through whichever critic attains the min, back to its action input
    pick_a = (qa <= qb).astype(out.dtype)
    d_action = np.zeros_like(hs.action)
    for picked, q, cache_q, yq in ((pick_a, q1, cache_a, ya), (1.0 - pick_a, q2, cache_b, yb)):
        dy = np.zeros_like(yq)
        dy[:, 0] = -picked / batch
        _, _, dx = q.backward(cache_q, dy)
        d_action += dx[:, obs.shape[1]:]

    d_logprob = np.full(batch, alpha / batch, dtype=out.dtype)
    d_out = head_backward(hs, d_logprob, d_action, bound)
    dw, db, _ = actor.backward(cache, d_out)
    return loss, dw, db, float(np.mean(hs.log_prob))


# ---- replay buffer --------------------------------------------------------


class ReplayBuffer:
    """Fixed-capacity ring buffer of flat transitions."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, dtype=np.float32):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.act = np.zeros((capacity, act_dim), dtype=dtype)
        self.rew = np.zeros(capacity, dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self.size = 0
        self.ptr = 0

    def add(self, obs, act, rew, next_obs, done) -> None:
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = 1.0 if done else 0.0
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (
            self.obs[idx],
            self.act[idx],
            self.rew[idx],
            self.next_obs[idx],
            self.done[idx],
        )


# ---- learner ---------------------------------------------------------------


@dataclass
class SacSettings:
    lr: float = 3e-4
    gamma: float = 1.0
    tau: float = 5e-3
    entropy_target: float = -3.0
    init_log_alpha: float = 0.0
    reward_scale: float = 1.0


class SacLearner:
    """Owns the actor, twin critics and temperature for one training run.

    The actor Mlp is trained in place, so passing a policy's network here
    updates that policy directly.
    """

    def __init__(
        self,
        actor: Mlp,
        obs_dim: int,
        act_dim: int,
        bound: float,
        settings: SacSettings,
        rng: np.random.Generator,
        hidden: tuple[int, int] = (64, 64),
    ):
        self.actor = actor
        self.act_dim = act_dim
        self.bound = bound
        self.s = settings
        self.rng = rng
        dtype = actor.dtype
        self.q1 = Mlp([obs_dim + act_dim, *hidden, 1], rng=rng, dtype=dtype)
        self.q2 = Mlp([obs_dim + act_dim, *hidden, 1], rng=rng, dtype=dtype)
        self.q1_targ = self.q1.copy()
        self.q2_targ = self.q2.copy()
        self.log_alpha = float(settings.init_log_alpha)
        self.opt_actor = Adam(actor.param_arrays(), lr=settings.lr)
        self.opt_q1 = Adam(self.q1.param_arrays(), lr=settings.lr)
        self.opt_q2 = Adam(self.q2.param_arrays(), lr=settings.lr)
        self._alpha_m = 0.0
        self._alpha_v = 0.0
        self._alpha_t = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def act_stochastic(self, obs: np.ndarray) -> np.ndarray:
        out = self.actor.forward(obs[None, :])
        eps = self.rng.standard_normal((1, self.act_dim)).astype(self.actor.dtype)
        return head_sample(out, eps, self.bound).action[0]

    def act_mean(self, obs: np.ndarray) -> np.ndarray:
        out = self.actor.forward(obs[None, :])
        return self.bound * np.tanh(out[0, : self.act_dim])

    def targets(self, rew, next_obs, done) -> np.ndarray:
        out = self.actor.forward(next_obs)
        eps = self.rng.standard_normal((next_obs.shape[0], self.act_dim)).astype(
            self.actor.dtype
        )
        hs = head_sample(out, eps, self.bound)
        qt = np.minimum(
            critic_forward(self.q1_targ, next_obs, hs.action),
            critic_forward(self.q2_targ, next_obs, hs.action),
        )
        return rew * self.s.reward_scale + (1.0 - done) * self.s.gamma * (
            qt - self.alpha * hs.log_prob
        )

    def update(self, batch) -> dict:
        obs, act, rew, next_obs, done = batch
        y = self.targets(rew, next_obs, done)

        l1, dw1, db1 = critic_loss_grads(self.q1, obs, act, y)
        l2, dw2, db2 = critic_loss_grads(self.q2, obs, act, y)
        self.opt_q1.step(_interleave(dw1, db1))
        self.opt_q2.step(_interleave(dw2, db2))

        eps = self.rng.standard_normal((obs.shape[0], self.act_dim)).astype(
            self.actor.dtype
        )
        la, dwa, dba, mean_lp = actor_loss_grads(
            self.actor, self.q1, self.q2, obs, eps, self.alpha, self.bound
        )
        self.opt_actor.step(_interleave(dwa, dba))

        # temperature: minimize -log_alpha * (log_prob + target entropy)
        g_alpha = -(mean_lp + self.s.entropy_target)
        self._alpha_t += 1
        self._alpha_m = 0.9 * self._alpha_m + 0.1 * g_alpha
        self._alpha_v = 0.999 * self._alpha_v + 0.001 * g_alpha * g_alpha
        mhat = self._alpha_m / (1.0 - 0.9**self._alpha_t)
        vhat = self._alpha_v / (1.0 - 0.999**self._alpha_t)
        self.log_alpha -= self.s.lr * mhat / (np.sqrt(vhat) + 1e-8)

        self._soft_update(self.q1_targ, self.q1)
        self._soft_update(self.q2_targ, self.q2)
        return {
            "critic_loss": 0.5 * (l1 + l2),
            "actor_loss": la,
            "alpha": self.alpha,
            "mean_log_prob": mean_lp,
        }

    def _soft_update(self, targ: Mlp, src: Mlp) -> None:
        tau = self.s.tau
        for pt, ps in zip(targ.param_arrays(), src.param_arrays()):
            pt *= 1.0 - tau
            pt += tau * ps


def _interleave(dw: list[np.ndarray], db: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for w, b in zip(dw, db):
        out.append(w)
        out.append(b)
    return out
