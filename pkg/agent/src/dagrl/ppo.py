"""PPO agent over the environment protocol.

The policy embeds the task graph with a (pretrained) attention encoder,
flattens the node embeddings, concatenates an MLP over the location rows,
and feeds a tanh trunk with three heads: node logits (masked to available
nodes), location logits (0 = own device, 1..M = edge servers) and a scalar
value.  Rollouts are collected episode-by-episode over an EnvClient;
updates use the clipped surrogate objective with GAE advantages and plain
discounted returns as value targets.

Node logits are padded to the dataset-wide ``max_nodes`` so one policy
serves DAGs of different sizes; padding is always masked off.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .client import obs_to_graph
from .gat import Encoder, FeatureStats, GatConfig, load_encoder_archive

CHECKPOINT_VERSION = 1


class NonFiniteGradient(RuntimeError):
    """An update step produced NaN or infinite gradients."""


@dataclass(frozen=True)
class PpoConfig:
    """Hyper-parameters for the clipped-surrogate update."""

    clip: float = 0.2
    c1: float = 0.5
    c2: float = 0.01
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 3e-4
    hidden: int = 256
    minibatch: int = 512
    rollout_steps: int = 2048
    update_epochs: int = 4
    max_grad_norm: float = 0.5
    freeze_encoder: bool = True
    permute_nodes: bool = False
    init_local_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.clip < 1):
            raise ValueError("clip must be in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lam must be in [0, 1]")
        if self.minibatch < 1 or self.rollout_steps < 1 or self.update_epochs < 1:
            raise ValueError("batch sizes and epochs must be positive")


def _masked_entropy(logp):
    """Entropy from log-probs that may contain -inf entries.

    The -inf entries are zeroed before the product so the backward pass
    never sees 0 * -inf (which would poison gradients with NaN).
    """
    p = logp.exp()
    safe = logp.masked_fill(torch.isinf(logp), 0.0)
    return -(p * safe).sum(dim=-1)


class Policy(nn.Module):
    """Actor-critic over padded graph observations."""

    def __init__(self, encoder: Encoder, stats: FeatureStats, max_nodes,
                 num_users, num_servers, config: PpoConfig):
        super().__init__()
        self.encoder = encoder
        self.stats = stats
        self.max_nodes = max_nodes
        self.num_users = num_users
        self.num_servers = num_servers
        self.config = config
        if config.freeze_encoder:
            self.encoder.requires_grad_(False)
            self.encoder.eval()
        emb = max_nodes * encoder.out_dim
        loc_in = 2 * (num_users + num_servers)
        h = config.hidden
        self.loc_mlp = nn.Sequential(nn.Linear(loc_in, h), nn.Tanh())
        self.trunk = nn.Sequential(
            nn.Linear(emb + h, h), nn.Tanh(),
            nn.Linear(h, h), nn.Tanh(),
        )
        self.node_head = nn.Linear(h, max_nodes)
        self.loc_head = nn.Linear(h, num_servers + 1)
        self.value_head = nn.Linear(h, 1)
        for mod in (self.loc_mlp, self.trunk):
            for m in mod:
                if isinstance(m, nn.Linear):
                    nn.init.orthogonal_(m.weight, gain=1.0)
                    nn.init.zeros_(m.bias)
        for head, gain in ((self.node_head, 0.01), (self.loc_head, 0.01), (self.value_head, 1.0)):
            nn.init.orthogonal_(head.weight, gain=gain)
            nn.init.zeros_(head.bias)
        with torch.no_grad():
            # optional exploration prior: start episodes mostly-local so
            # single-offload deviations get clean credit from the outset,
            # instead of burning the step budget descending from uniform
            self.loc_head.bias[0] = config.init_local_bias

    def prepare(self, obs, baseline, perm=None):
        """Observation dict -> tensors, standardised and padded to max_nodes.

        ``perm`` (index tensor over the real nodes) reorders nodes before
        padding. Sampling then happens in the permuted index space; the
        environment action is ``perm[index]``. Randomising the order per
        step removes node identity from the flattened state, so the heads
        can only key on features, never on positions.
        """
        feats, adj = obs_to_graph(obs)
        n = feats.shape[0]
        if n > self.max_nodes:
            raise ValueError(f"graph has {n} nodes, policy built for <= {self.max_nodes}")
        x_real = self.stats.apply(feats)
        a_real = torch.as_tensor(adj, dtype=torch.float32)
        m_real = torch.as_tensor(obs["node_mask"], dtype=torch.bool)
        if perm is not None:
            x_real = x_real[perm]
            a_real = a_real[perm][:, perm]
            m_real = m_real[perm]
        x = torch.zeros(self.max_nodes, self.stats.mean.shape[0])
        x[:n] = x_real
        a = torch.eye(self.max_nodes)
        a[:n, :n] = a_real
        mask = torch.zeros(self.max_nodes, dtype=torch.bool)
        mask[:n] = m_real
        loc = torch.as_tensor(obs["location_features"], dtype=torch.float32)
        # dimensionless conditioning: EATs in units of the episode baseline,
        # clock speeds as log10 offsets from 1 GHz
        loc = torch.stack([loc[:, 0] / baseline, torch.log10(loc[:, 1]) - 9.0], dim=1)
        return {"x": x, "adj": a, "mask": mask, "loc": loc.flatten()}

    def forward(self, batch):
        """Batched tensors -> (masked node log-probs, loc log-probs, values).

        When the encoder is frozen, a precomputed ``z`` in the batch is
        used verbatim (it cannot change between update epochs).
        """
        z = batch.get("z")
        if z is None:
            if self.config.freeze_encoder:
                with torch.no_grad():
                    z = self.encoder(batch["x"], batch["adj"])
            else:
                z = self.encoder(batch["x"], batch["adj"])
        state = torch.cat([z.flatten(1), self.loc_mlp(batch["loc"])], dim=1)
        core = self.trunk(state)
        node_logits = self.node_head(core).masked_fill(~batch["mask"], float("-inf"))
        node_logp = F.log_softmax(node_logits, dim=-1)
        loc_logp = F.log_softmax(self.loc_head(core), dim=-1)
        value = self.value_head(core).squeeze(-1)
        return node_logp, loc_logp, value

    def act(self, obs, baseline, generator=None, greedy=False, perm=None):
        """Single-observation action. Returns (node, loc, logp, value, prepared).

        The returned node is in environment numbering; the index the nets
        saw (identical unless ``perm`` was given) is left in
        ``prepared["action_node"]`` for the update pass.
        """
        prepared = self.prepare(obs, baseline, perm=perm)
        batch = {k: v.unsqueeze(0) for k, v in prepared.items()}
        with torch.no_grad():
            node_logp, loc_logp, value = self.forward(batch)
        if greedy:
            node = int(node_logp[0].argmax())
            loc = int(loc_logp[0].argmax())
        else:
            node = int(torch.multinomial(node_logp[0].exp(), 1, generator=generator))
            loc = int(torch.multinomial(loc_logp[0].exp(), 1, generator=generator))
        if not bool(prepared["mask"][node]):
            raise RuntimeError(f"sampled masked node {node}")  # pragma: no cover
        logp = float(node_logp[0, node] + loc_logp[0, loc])
        prepared["action_node"] = torch.tensor(node)
        env_node = node if perm is None else int(perm[node])
        return env_node, loc, logp, float(value[0]), prepared

    def evaluate_actions(self, batch, node_actions, loc_actions):
        """Log-prob, entropy and value for stored actions (update pass)."""
        node_logp, loc_logp, value = self.forward(batch)
        lp = (node_logp.gather(1, node_actions.unsqueeze(1)).squeeze(1)
              + loc_logp.gather(1, loc_actions.unsqueeze(1)).squeeze(1))
        ent = _masked_entropy(node_logp) + _masked_entropy(loc_logp)
        return lp, ent, value


@dataclass
class Trajectory:
    """One complete episode of experience."""

    instance: str
    baseline_aft: float
    prepared: list = field(default_factory=list)
    nodes: list = field(default_factory=list)
    locs: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    final_mean_aft: float = 0.0

    def __len__(self):
        return len(self.rewards)


def compute_gae(rewards, values, gamma, lam):
    """GAE advantages and discounted returns for one episode.

    The terminal state has value 0.  Returns ``(advantages, returns)`` as
    float64 tensors; returns are plain discounted reward sums (the value
    targets), independent of lam.
    """
    T = len(rewards)
    if len(values) != T:
        raise ValueError("rewards and values must have equal length")
    adv = torch.zeros(T, dtype=torch.float64)
    ret = torch.zeros(T, dtype=torch.float64)
    last_adv = 0.0
    last_ret = 0.0
    for t in reversed(range(T)):
        next_value = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last_adv = delta + gamma * lam * last_adv
        last_ret = rewards[t] + gamma * last_ret
        adv[t] = last_adv
        ret[t] = last_ret
    return adv, ret


def collect_rollout(client, policy, config, generator, min_steps=None):
    """Sample complete episodes until at least ``min_steps`` steps collected.

    Episodes cycle through the server's dataset (reset without an
    instance).  Returns a list of Trajectory.
    """
    target = config.rollout_steps if min_steps is None else min_steps
    trajectories = []
    steps = 0
    while steps < target:
        obs, info = client.reset()
        traj = Trajectory(instance=info["instance"], baseline_aft=info["baseline_aft"])
        done = False
        while not done:
            perm = None
            if config.permute_nodes:
                perm = torch.randperm(len(obs["node_features"]),
                                      generator=generator)
            node, loc, logp, value, prepared = policy.act(
                obs, traj.baseline_aft, generator=generator, perm=perm)
            obs, reward, done, step_info = client.step(node, loc)
            traj.prepared.append(prepared)
            traj.nodes.append(int(prepared.pop("action_node")))
            traj.locs.append(loc)
            traj.logps.append(logp)
            traj.values.append(value)
            traj.rewards.append(reward)
        traj.final_mean_aft = step_info["mean_aft"]
        steps += len(traj)
        trajectories.append(traj)
    return trajectories


def collate(trajectories, config):
    """Stack trajectories into one update batch with advantages and returns."""
    keys = ("x", "adj", "mask", "loc")
    batch = {
        k: torch.stack([p[k] for t in trajectories for p in t.prepared])
        for k in keys
    }
    batch["node_actions"] = torch.tensor(
        [n for t in trajectories for n in t.nodes], dtype=torch.long)
    batch["loc_actions"] = torch.tensor(
        [l for t in trajectories for l in t.locs], dtype=torch.long)
    batch["old_logp"] = torch.tensor(
        [lp for t in trajectories for lp in t.logps], dtype=torch.float32)
    advs, rets = [], []
    for t in trajectories:
        adv, ret = compute_gae(t.rewards, t.values, config.gamma, config.lam)
        advs.append(adv)
        rets.append(ret)
    batch["advantages"] = torch.cat(advs).to(torch.float32)
    batch["returns"] = torch.cat(rets).to(torch.float32)
    return batch


def ppo_loss(new_logp, entropy, values, old_logp, advantages, returns, config):
    """Clipped-surrogate loss (to minimise). Returns ``(loss, stats)``.

    stats carries the mean probability ratio before any step, which equals
    1 exactly when the evaluated policy matches the one that sampled.
    """
    ratio = torch.exp(new_logp - old_logp)
    surr1 = ratio * advantages
    surr2 = torch.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip) * advantages
    policy_loss = -torch.min(surr1, surr2).mean()
    value_loss = F.mse_loss(values, returns)
    ent = entropy.mean()
    loss = policy_loss + config.c1 * value_loss - config.c2 * ent
    stats = {
        "ratio_mean": float(ratio.detach().mean()),
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(ent.detach()),
    }
    return loss, stats


def ppo_update(policy, optimizer, batch, config, generator=None):
    """Run ``update_epochs`` passes of minibatch updates over one rollout.

    Advantages are normalised once over the whole batch.  Returns a stats
    dict; ``first_ratio_mean`` is the mean probability ratio of the first
    minibatch before any gradient step.  Raises NonFiniteGradient if a
    backward pass produces non-finite gradients.
    """
    T = batch["old_logp"].shape[0]
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    keys = ["x", "adj", "mask", "loc"]
    if policy.config.freeze_encoder and "z" not in batch:
        # frozen embeddings are constant across epochs; compute them once
        with torch.no_grad():
            chunks = [policy.encoder(batch["x"][lo:lo + 512], batch["adj"][lo:lo + 512])
                      for lo in range(0, T, 512)]
        batch = dict(batch, z=torch.cat(chunks))
    if "z" in batch:
        keys.append("z")
    first_ratio = None
    last = {}
    for _ in range(config.update_epochs):
        perm = torch.randperm(T, generator=generator)
        for lo in range(0, T, config.minibatch):
            idx = perm[lo:lo + config.minibatch]
            sub = {k: batch[k][idx] for k in keys}
            lp, ent, val = policy.evaluate_actions(
                sub, batch["node_actions"][idx], batch["loc_actions"][idx])
            loss, stats = ppo_loss(
                lp, ent, val, batch["old_logp"][idx], adv[idx],
                batch["returns"][idx], config)
            if first_ratio is None:
                first_ratio = stats["ratio_mean"]
            optimizer.zero_grad()
            loss.backward()
            for p in policy.parameters():
                if p.grad is not None and not torch.isfinite(p.grad).all():
                    raise NonFiniteGradient("non-finite gradient in update")
            nn.utils.clip_grad_norm_(
                (p for p in policy.parameters() if p.requires_grad),
                config.max_grad_norm)
            optimizer.step()
            last = stats
    last["first_ratio_mean"] = first_ratio
    return last


def greedy_episode(client, policy, instance=None):
    """Play one episode with argmax actions. Returns a transcript record."""
    obs, info = client.reset(instance=instance)
    baseline = info["baseline_aft"]
    actions = []
    done = False
    step_info = {"mean_aft": baseline}
    while not done:
        node, loc, _, _, _ = policy.act(obs, baseline, greedy=True)
        obs, _, done, step_info = client.step(node, loc)
        actions.append([node, loc])
    return {
        "instance": info["instance"],
        "actions": actions,
        "mean_aft": step_info["mean_aft"],
        "baseline_aft": baseline,
    }


def write_transcript(path, episodes):
    """Write greedy episodes as replay-format jsonl: {"instance", "actions"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            rec = {"instance": ep["instance"], "actions": ep["actions"]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def train(client, encoder_archive, config: PpoConfig, total_steps,
          callback=None):
    """Alternate rollouts and updates until ``total_steps`` env steps.

    ``callback(policy, steps, stats)`` runs after every update; returning
    True stops training early.  Returns ``(policy, history)``.
    """
    torch.manual_seed(config.seed)
    encoder, stats = load_encoder_archive(encoder_archive)
    spec = client.spec()
    policy = Policy(
        encoder, stats, spec["max_nodes"],
        spec["num_users"], spec["num_servers"], config)
    optimizer = torch.optim.Adam(
        (p for p in policy.parameters() if p.requires_grad), lr=config.lr)
    generator = torch.Generator().manual_seed(config.seed)
    steps = 0
    history = []
    while steps < total_steps:
        trajectories = collect_rollout(client, policy, config, generator)
        steps += sum(len(t) for t in trajectories)
        batch = collate(trajectories, config)
        stats_u = ppo_update(policy, optimizer, batch, config, generator=generator)
        stats_u["steps"] = steps
        stats_u["mean_final_aft"] = (
            sum(t.final_mean_aft for t in trajectories) / len(trajectories))
        stats_u["mean_baseline_aft"] = (
            sum(t.baseline_aft for t in trajectories) / len(trajectories))
        history.append(stats_u)
        if callback is not None and callback(policy, steps, stats_u):
            break
    return policy, history


def save_policy(path, policy: Policy):
    """Checkpoint the full actor-critic (encoder included) plus metadata."""
    torch.save({
        "version": CHECKPOINT_VERSION,
        "ppo_config": asdict(policy.config),
        "gat_config": asdict(policy.encoder.config),
        "mean": policy.stats.mean,
        "std": policy.stats.std,
        "max_nodes": policy.max_nodes,
        "num_users": policy.num_users,
        "num_servers": policy.num_servers,
        "state_dict": policy.state_dict(),
    }, path)


def load_policy(path) -> Policy:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    config = PpoConfig(**payload["ppo_config"])
    encoder = Encoder(GatConfig(**payload["gat_config"]))
    stats = FeatureStats(mean=payload["mean"], std=payload["std"])
    policy = Policy(encoder, stats, payload["max_nodes"],
                    payload["num_users"], payload["num_servers"], config)
    policy.load_state_dict(payload["state_dict"])
    policy.eval()
    return policy
