"""Shared offloading policy: observation encoders, attention messages, actor-critic heads."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..radio import shannon_rate
from ..scenario import ScenarioConfig
from ..sim import P2Solver, SlotOutcome, SlotView
from .nn import DotProductAttention, Linear, ReLU, Sequential, masked_log_softmax

CHECKPOINT_VERSION = 1
MEC_DIM = 6


def radio_dim(n_aps: int) -> int:
    return (n_aps + 1) + 3 + 2 * n_aps


@dataclass(frozen=True)
class ObsNorm:
    """Fixed normalisation constants, derived from the config only."""

    rate_ref: float
    radius: float
    f_max: float
    q_clip: float
    z_clip: float
    rss_ref_dbm: float = -60.0
    rss_scale_db: float = 10.0
    pad: float = -1.0

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "ObsNorm":
        q_avg = config.nominal_queue_bound
        # Multiple-access sum capacity of K UEs at the target SNR.
        return cls(rate_ref=float(shannon_rate(config.target_snr * config.n_ues, config)),
                   radius=config.cell_radius, f_max=config.f_max,
                   q_clip=(1 + config.queue_clip_eps) * q_avg,
                   z_clip=(1 + config.virtual_clip_eps) * q_avg ** 2)


@dataclass
class ObsBatch:
    radio: np.ndarray  # (S, K, radio_dim)
    mec: np.ndarray  # (S, K, 6)
    neighbours: np.ndarray  # (S, K, K) bool, [s, k, l] = l in N_k
    action_mask: np.ndarray  # (S, K, N+1) bool

    def take(self, idx) -> "ObsBatch":
        return ObsBatch(self.radio[idx], self.mec[idx], self.neighbours[idx], self.action_mask[idx])

    @classmethod
    def stack(cls, items) -> "ObsBatch":
        return cls(*(np.stack([getattr(o, f) for o in items]) for f in ("radio", "mec", "neighbours", "action_mask")))


def neighbourhoods(ue_positions: np.ndarray, radius=None) -> np.ndarray:
    K = len(ue_positions)
    if radius is None:
        return np.ones((K, K), dtype=bool)
    d = np.hypot(*(ue_positions[:, None, :] - ue_positions[None, :, :]).transpose(2, 0, 1))
    return (d <= radius) | np.eye(K, dtype=bool)


def build_observations(view: SlotView, norm: ObsNorm) -> ObsBatch:
    """Observations of every UE for one slot (leading batch dimension of 1 omitted)."""
    dep = view.deployment
    K, N = dep.n_ues, dep.n_aps
    cand = dep.candidate_mask()
    prev = view.prev_actions
    onehot = np.zeros((K, N + 1))
    onehot[np.arange(K), prev] = 1.0
    own_rate = view.prev_rates / norm.rate_ref
    sum_rate = np.full(K, view.prev_rates.sum() / norm.rate_ref)
    rss = np.where(cand, (view.rss - norm.rss_ref_dbm) / norm.rss_scale_db, norm.pad)
    aoa = np.where(cand, view.geometry.aoa / math.pi, norm.pad)
    radio = np.concatenate([onehot, own_rate[:, None], sum_rate[:, None],
                            view.prev_ack[:, None].astype(float), rss, aoa], axis=1)
    q = view.queues
    mec = np.stack([dep.ue_positions[:, 0] / norm.radius, dep.ue_positions[:, 1] / norm.radius,
                    view.prev_shares / norm.f_max, q.local / norm.q_clip, q.server / norm.q_clip,
                    q.virtual / norm.z_clip], axis=1)
    amask = np.concatenate([np.ones((K, 1), dtype=bool), cand], axis=1)
    nbr = neighbourhoods(dep.ue_positions, view.config.neighbor_radius)
    return ObsBatch(radio, mec, nbr, amask)


@dataclass
class PolicyOutput:
    logp: np.ndarray  # (S, K, A), -inf where masked
    value: np.ndarray  # (S, K)
    attention: np.ndarray  # (S, K, K)
    context: np.ndarray  # (S, K, m)


class PolicyNetwork:
    """One parameter set shared by all agents; no weight depends on K."""

    def __init__(self, n_aps: int, m: int = 128, seed=0):
        rng = np.random.default_rng(seed)
        self.n_aps, self.m = n_aps, m
        dr = radio_dim(n_aps)
        self.encoder = Sequential(Linear(dr, m, rng), ReLU())
        self.w_key = Linear(MEC_DIM, m, rng, bias=False, gain=1.0)
        self.w_query = Linear(MEC_DIM, m, rng, bias=False, gain=1.0)
        self.w_value = Linear(MEC_DIM, m, rng, bias=False, gain=1.0)
        self.attention = DotProductAttention()
        self.combiner = Sequential(Linear(2 * m, m, rng), ReLU())
        self.actor = Sequential(Linear(m, 2 * m, rng), ReLU(), Linear(2 * m, n_aps + 1, rng, gain=0.01))
        self.critic = Sequential(Linear(m, 2 * m, rng), ReLU(), Linear(2 * m, 1, rng, gain=1.0))

    def layers(self) -> dict:
        named = {"encoder.0": self.encoder.layers[0], "w_key": self.w_key, "w_query": self.w_query,
                 "w_value": self.w_value, "combiner.0": self.combiner.layers[0],
                 "actor.0": self.actor.layers[0], "actor.2": self.actor.layers[2],
                 "critic.0": self.critic.layers[0], "critic.2": self.critic.layers[2]}
        return named

    def parameters(self):
        """Flat (name, param, grad) triples in a fixed order."""
        out = []
        for lname, layer in self.layers().items():
            for pname in sorted(layer.params):
                out.append((f"{lname}.{pname}", layer.params[pname], layer.grads[pname]))
        return out

    def zero_grad(self):
        for _, _, g in self.parameters():
            g[...] = 0.0

    def forward(self, obs: ObsBatch) -> PolicyOutput:
        u = self.encoder.forward(obs.radio)
        key = self.w_key.forward(obs.mec)
        query = self.w_query.forward(obs.mec)
        value = self.w_value.forward(obs.mec)
        v, alpha = self.attention.forward(query, key, value, obs.neighbours)
        c = self.combiner.forward(np.concatenate([u, v], axis=-1))
        logits = self.actor.forward(c)
        val = self.critic.forward(c)[..., 0]
        return PolicyOutput(masked_log_softmax(logits, obs.action_mask), val, alpha, c)

    def backward(self, dlogits: np.ndarray, dvalue: np.ndarray) -> None:
        dc = self.actor.backward(dlogits) + self.critic.backward(dvalue[..., None])
        dcat = self.combiner.backward(dc)
        self.encoder.backward(dcat[..., :self.m])
        dq, dkey, dval = self.attention.backward(dcat[..., self.m:])
        self.w_query.backward(dq)
        self.w_key.backward(dkey)
        self.w_value.backward(dval)

    def shapes(self) -> dict:
        return {name: p.shape for name, p, _ in self.parameters()}

    def copy_from(self, other: "PolicyNetwork") -> None:
        for (_, p, _), (_, q, _) in zip(self.parameters(), other.parameters()):
            p[...] = q


def act(logp: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Pick actions from masked log-probabilities over the last axis."""
    probs = np.exp(logp)
    if mode == "greedy":
        return np.argmax(np.where(np.isfinite(logp), logp, -np.inf), axis=-1)
    if mode != "sample":
        raise ValueError("mode must be 'sample' or 'greedy'")
    flat = probs.reshape(-1, probs.shape[-1])
    cdf = np.cumsum(flat, axis=1)
    u = rng.random(len(flat))[:, None] * cdf[:, -1:]
    choice = (u >= cdf).sum(axis=1)
    choice = np.minimum(choice, flat.shape[1] - 1)
    # Never land on a zero-probability entry because of rounding.
    bad = flat[np.arange(len(flat)), choice] == 0.0
    if bad.any():
        choice[bad] = np.argmax(flat[bad], axis=1)
    return choice.reshape(probs.shape[:-1])


class LearnedSolver(P2Solver):
    """P2 solver driven by the shared policy; optionally records rollouts."""

    name = "learned"

    def __init__(self, policy: PolicyNetwork, mode: str = "greedy", record: bool = False, norm: ObsNorm | None = None):
        self.policy = policy
        self.mode = mode
        self.record = record
        self.norm = norm
        self.buffer = []
        self._pending = None

    def reset(self, deployment, config):
        if self.norm is None:
            self.norm = ObsNorm.from_config(config)
        self._pending = None

    def decide(self, view: SlotView) -> np.ndarray:
        obs = build_observations(view, self.norm)
        batch = ObsBatch.stack([obs])
        out = self.policy.forward(batch)
        actions = act(out.logp, self.mode, view.rng)[0]
        if self.record:
            logp = out.logp[0, np.arange(len(actions)), actions]
            self._pending = (obs, actions.copy(), logp, out.value[0].copy())
        return actions

    def observe(self, outcome: SlotOutcome) -> None:
        if self.record and self._pending is not None:
            obs, actions, logp, value = self._pending
            self.buffer.append((obs, actions, logp, value, outcome.reward))
            self._pending = None


def save_checkpoint(path, policy: PolicyNetwork, extra: dict | None = None) -> None:
    meta = {"version": CHECKPOINT_VERSION, "n_aps": policy.n_aps, "m": policy.m,
            "shapes": {k: list(v) for k, v in policy.shapes().items()}, "extra": extra or {}}
    arrays = {name: p for name, p, _ in policy.parameters()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[PolicyNetwork, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        policy = PolicyNetwork(meta["n_aps"], meta["m"])
        for name, p, _ in policy.parameters():
            arr = data[name]
            if list(arr.shape) != meta["shapes"][name] or arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}")
            p[...] = arr
    return policy, meta
