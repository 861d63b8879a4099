"""Multi-user bandwidth split minimizing the longest transmission time.

Three routes to an allocation: a closed-form equal-time oracle, an
equal-split baseline, and a DDPG agent trained against the simulated
environment. Actions live on the simplex via softmax, so the bandwidth
budget holds by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mlp import AdamState, Mlp, adam_step


@dataclass(frozen=True)
class AllocationScenario:
    loads: tuple          # bits per UE
    snrs: tuple           # linear SNR per UE
    bandwidth_hz: float   # total budget B
    mask_ratios: tuple    # rho per UE (state features)
    distances: tuple | None = None  # meters, metadata only

    def __post_init__(self):
        n = len(self.loads)
        if n < 2:
            raise ValueError("need at least 2 UEs")
        if len(self.snrs) != n or len(self.mask_ratios) != n:
            raise ValueError("per-UE field lengths differ")
        if min(self.loads) <= 0 or min(self.snrs) <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("loads, snrs, and bandwidth must be positive")

    @property
    def n_ue(self) -> int:
        return len(self.loads)

    @property
    def spectral_efficiency(self) -> np.ndarray:
        """bits/s/Hz per UE: log2(1 + snr)."""
        return np.log2(1.0 + np.asarray(self.snrs, dtype=np.float64))


@dataclass
class DdpgHyper:
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    noise_scale: float = 0.2
    noise_floor: float = 0.01
    noise_decay: float = 0.999
    batch_size: int = 64
    buffer_capacity: int = 100_000
    episode_len: int = 50          # TTIs per episode
    episodes: int = 500
    hidden: tuple = (64, 64)
    alpha_r: float | None = None   # reward scale; None -> ln(10) / equal-split time


def transmission_times(sc: AllocationScenario, bandwidths: np.ndarray) -> np.ndarray:
    """t_i = load_i / (B_i * log2(1 + snr_i))."""
    return np.asarray(sc.loads, dtype=np.float64) / (bandwidths * sc.spectral_efficiency)


def oracle_allocate(sc: AllocationScenario) -> tuple[np.ndarray, float]:
    """Equal-time split: B_i proportional to load_i / log2(1 + snr_i).

    All transmission times coincide at t_max = sum(w) / B, the minimum of the
    max-time objective (any other feasible split leaves some UE slower).
    """
    w = np.asarray(sc.loads, dtype=np.float64) / sc.spectral_efficiency
    b = sc.bandwidth_hz * w / w.sum()
    return b, float(w.sum() / sc.bandwidth_hz)


def equal_split_baseline(sc: AllocationScenario) -> tuple[np.ndarray, float]:
    b = np.full(sc.n_ue, sc.bandwidth_hz / sc.n_ue)
    return b, float(transmission_times(sc, b).max())


def softmax(z: np.ndarray) -> np.ndarray:
    """Simplex projection with a floor so components never underflow to 0."""
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    a = e / e.sum(axis=-1, keepdims=True)
    a = np.maximum(a, 1e-12)
    return a / a.sum(axis=-1, keepdims=True)


def softmax_grad(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of softmax output y against upstream g."""
    return y * (g - np.sum(g * y, axis=-1, keepdims=True))


class AllocationEnv:
    """Fixed-scenario environment; state is [rho_1..rho_n, t_max / t_ref].

    The normalized-time feature is clipped at T_NORM_CAP: a starved UE can
    make t_max arbitrarily large, and an unbounded state feature feeds back
    into the actor until its logits overflow.
    """

    T_NORM_CAP = 10.0

    def __init__(self, sc: AllocationScenario, alpha_r: float | None = None):
        self.sc = sc
        _, self.t_ref = equal_split_baseline(sc)
        self.alpha_r = alpha_r if alpha_r is not None else math.log(10.0) / self.t_ref

    @property
    def state_dim(self) -> int:
        return self.sc.n_ue + 1

    def reset(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.sc.mask_ratios, dtype=np.float64), [1.0]])

    def step(self, action: np.ndarray) -> tuple[float, np.ndarray, float]:
        """Apply allocation fractions; returns (reward, next_state, t_max)."""
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.sc.n_ue,) or np.any(action <= 0.0) or abs(action.sum() - 1.0) > 1e-6:
            raise ValueError("action must be positive fractions summing to 1")
        t = transmission_times(self.sc, action * self.sc.bandwidth_hz)
        t_max = float(t.max())
        reward = math.exp(-self.alpha_r * t_max)
        t_norm = min(t_max / self.t_ref, self.T_NORM_CAP)
        state = np.concatenate([np.asarray(self.sc.mask_ratios, dtype=np.float64), [t_norm]])
        return reward, state, t_max


def select_action(actor: Mlp, state: np.ndarray, noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    """Softmax of actor logits with exploration noise added pre-softmax."""
    logits = actor.forward(state)
    if noise_scale > 0.0:
        logits = logits + noise_scale * rng.standard_normal(logits.shape)
    return softmax(logits)


def greedy_action(actor: Mlp, state: np.ndarray) -> np.ndarray:
    return softmax(actor.forward(state))


def td_target(
    rewards: np.ndarray,
    next_states: np.ndarray,
    critic_target: Mlp,
    actor_target: Mlp,
    gamma: float,
) -> np.ndarray:
    """y = R + gamma * Q'(S', mu'(S')); episodes are continuing, no terminal mask."""
    next_actions = softmax(actor_target.forward(next_states))
    q_next = critic_target.forward(np.concatenate([next_states, next_actions], axis=1))
    return rewards.reshape(-1, 1) + gamma * q_next


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """theta' <- tau * theta + (1 - tau) * theta'."""
    for wt, ws in zip(target.weights, source.weights):
        wt *= 1.0 - tau
        wt += tau * ws
    for bt, bs in zip(target.biases, source.biases):
        bt *= 1.0 - tau
        bt += tau * bs


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.size = 0
        self._next = 0

    def add(self, s, a, r, s2) -> None:
        k = self._next
        self.states[k] = s
        self.actions[k] = a
        self.rewards[k] = r
        self.next_states[k] = s2
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=n)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


@dataclass
class DdpgAgent:
    actor: Mlp
    critic: Mlp
    actor_target: Mlp
    critic_target: Mlp
    hyper: DdpgHyper

    def allocate(self, env: AllocationEnv) -> tuple[np.ndarray, float]:
        """Noise-free policy evaluated on the reset state."""
        fractions = greedy_action(self.actor, env.reset())
        _, _, t_max = env.step(fractions)
        return fractions, t_max


def build_agent(n_ue: int, hyper: DdpgHyper, seed: int) -> DdpgAgent:
    state_dim = n_ue + 1
    actor = Mlp((state_dim, *hyper.hidden, n_ue), ("relu",) * len(hyper.hidden) + ("identity",), seed)
    critic = Mlp(
        (state_dim + n_ue, *hyper.hidden, 1), ("relu",) * len(hyper.hidden) + ("identity",), seed + 1
    )
    return DdpgAgent(actor, critic, actor.copy(), critic.copy(), hyper)


def train_ddpg(
    sc: AllocationScenario, hyper: DdpgHyper | None = None, seed: int = 0
) -> tuple[DdpgAgent, list[tuple[int, float, float]]]:
    """Run the episode/TTI training loop on one scenario.

    Per TTI: act with decaying pre-softmax noise, store the transition, and
    once the buffer holds a batch, update the critic on the squared TD error,
    ascend the actor through the critic's action gradient, and soft-update
    both targets. Returns the agent and (episode, mean reward, greedy t_max)
    learning-curve rows. Deterministic for a given seed.
    """
    hyper = hyper or DdpgHyper()
    env = AllocationEnv(sc, hyper.alpha_r)
    agent = build_agent(sc.n_ue, hyper, seed)
    actor_opt = AdamState.for_net(agent.actor, hyper.actor_lr)
    critic_opt = AdamState.for_net(agent.critic, hyper.critic_lr)
    buffer = ReplayBuffer(hyper.buffer_capacity, env.state_dim, sc.n_ue)
    rng = np.random.default_rng(seed)
    curve = []
    for episode in range(hyper.episodes):
        state = env.reset()
        noise = hyper.noise_scale
        rewards = []
        for _ in range(hyper.episode_len):
            action = select_action(agent.actor, state, noise, rng)
            noise = max(hyper.noise_floor, noise * hyper.noise_decay)
            reward, next_state, _ = env.step(action)
            buffer.add(state, action, reward, next_state)
            rewards.append(reward)
            if buffer.size >= hyper.batch_size:
                _update(agent, buffer, actor_opt, critic_opt, hyper, rng)
            state = next_state
        _, greedy_t = agent.allocate(env)
        curve.append((episode, float(np.mean(rewards)), greedy_t))
    return agent, curve


def _update(agent, buffer, actor_opt, critic_opt, hyper, rng) -> None:
    s, a, r, s2 = buffer.sample(hyper.batch_size, rng)
    n = hyper.batch_size

    y = td_target(r, s2, agent.critic_target, agent.actor_target, hyper.gamma)
    q = agent.critic.forward(np.concatenate([s, a], axis=1), record=True)
    critic_grads, _ = agent.critic.backward(2.0 * (q - y) / n)
    adam_step(agent.critic, critic_grads, critic_opt)

    logits = agent.actor.forward(s, record=True)
    actions = softmax(logits)
    agent.critic.forward(np.concatenate([s, actions], axis=1), record=True)
    _, dq_dinput = agent.critic.backward(np.full((n, 1), 1.0 / n))
    dq_daction = dq_dinput[:, s.shape[1] :]
    upstream = softmax_grad(actions, dq_daction)
    actor_grads, _ = agent.actor.backward(upstream)
    # ascend Q: Adam minimizes, so feed the negated gradient
    adam_step(agent.actor, [(-dw, -db) for dw, db in actor_grads], actor_opt)

    soft_update(agent.critic_target, agent.critic, hyper.tau)
    soft_update(agent.actor_target, agent.actor, hyper.tau)
