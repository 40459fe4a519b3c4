"""Graph-attention autoencoder over task-graph observations.

The encoder embeds each node of a DAG by attending over its in-neighbours
(predecessors), so information flows along dependency edges.  A mirrored
decoder reconstructs the raw node features from the embeddings; training
minimises a feature-reconstruction loss plus a first-order structure loss
that pulls embeddings of adjacent nodes together.

All tensors are dense and batched: features ``[B, N, F]``, adjacency
``[B, N, N]`` with ``adj[b, i, j] = 1`` for an edge i -> j.  Every node
must carry a self-loop (unit diagonal) so attention rows are never empty.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

ARCHIVE_VERSION = 1


class ShapeMismatch(ValueError):
    """Input tensor shapes are inconsistent with the model or each other."""


class DivergedLoss(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class GatConfig:
    """Hyper-parameters for the attention autoencoder."""

    in_dim: int = 6
    hidden: int = 128
    heads: int = 3
    layers: int = 3
    negative_slope: float = 0.2
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.in_dim < 1 or self.hidden < 1 or self.heads < 1:
            raise ValueError("in_dim, hidden and heads must be positive")
        if self.layers < 1:
            raise ValueError("need at least one layer")


class GraphAttentionLayer(nn.Module):
    """One multi-head attention layer over in-neighbours.

    Node i aggregates messages from every j with ``adj[j, i] = 1`` (its
    predecessors plus itself via the self-loop).  Raw scores are
    ``LeakyReLU(a_dst . Wh_i + a_src . Wh_j)``, normalised with a softmax
    over j.  Heads are concatenated when ``concat_heads`` else averaged;
    a LeakyReLU activation is applied to the output.
    """

    def __init__(self, in_dim, out_dim, heads, concat_heads, negative_slope=0.2):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.concat_heads = concat_heads
        self.negative_slope = negative_slope
        self.lin = nn.Linear(in_dim, heads * out_dim, bias=False)
        self.att_src = nn.Parameter(torch.empty(heads, out_dim))
        self.att_dst = nn.Parameter(torch.empty(heads, out_dim))
        nn.init.xavier_uniform_(self.lin.weight)
        nn.init.xavier_uniform_(self.att_src)
        nn.init.xavier_uniform_(self.att_dst)

    def forward(self, h, adj, need_weights=False):
        B, N, _ = h.shape
        wh = self.lin(h).view(B, N, self.heads, self.out_dim)
        # [B, N, H] scores per node in each role
        score_src = (wh * self.att_src).sum(-1)
        score_dst = (wh * self.att_dst).sum(-1)
        # e[b, h, i, j]: j's message into i
        e = score_dst.permute(0, 2, 1).unsqueeze(-1) + score_src.permute(0, 2, 1).unsqueeze(-2)
        e = F.leaky_relu(e, self.negative_slope)
        # message j -> i allowed iff edge j -> i (adjacency transposed)
        allowed = (adj.transpose(1, 2) > 0).unsqueeze(1)
        e = e.masked_fill(~allowed, float("-inf"))
        att = torch.softmax(e, dim=-1)
        out = torch.einsum("bhij,bjhf->bihf", att, wh)
        if self.concat_heads:
            out = out.reshape(B, N, self.heads * self.out_dim)
        else:
            out = out.mean(dim=2)
        out = F.leaky_relu(out, self.negative_slope)
        if need_weights:
            return out, att
        return out

    @property
    def width(self):
        return self.heads * self.out_dim if self.concat_heads else self.out_dim


def _stack(config, first_dim, last_dim):
    """Layer stack: heads concatenated except the last, which averages."""
    layers = []
    dim = first_dim
    for i in range(config.layers):
        last = i == config.layers - 1
        out = last_dim if last else config.hidden
        layer = GraphAttentionLayer(
            dim, out, config.heads, concat_heads=not last,
            negative_slope=config.negative_slope,
        )
        layers.append(layer)
        dim = layer.width
    return nn.ModuleList(layers)


class Encoder(nn.Module):
    """Stack of attention layers mapping raw features to embeddings."""

    def __init__(self, config: GatConfig):
        super().__init__()
        self.config = config
        self.layers = _stack(config, config.in_dim, config.hidden)

    @property
    def out_dim(self):
        return self.config.hidden

    def _check(self, h, adj):
        if h.dim() != 3 or adj.dim() != 3:
            raise ShapeMismatch(f"want [B,N,F] and [B,N,N], got {tuple(h.shape)} and {tuple(adj.shape)}")
        if h.shape[-1] != self.layers[0].in_dim:
            raise ShapeMismatch(f"feature dim {h.shape[-1]} != {self.layers[0].in_dim}")
        if adj.shape[0] != h.shape[0] or adj.shape[1] != h.shape[1] or adj.shape[2] != h.shape[1]:
            raise ShapeMismatch(f"adjacency {tuple(adj.shape)} does not match features {tuple(h.shape)}")
        diag = torch.diagonal(adj, dim1=1, dim2=2)
        if not bool((diag > 0).all()):
            raise ShapeMismatch("adjacency must have a unit diagonal (self-loops)")

    def forward(self, h, adj, need_weights=False):
        self._check(h, adj)
        weights = []
        for layer in self.layers:
            if need_weights:
                h, att = layer(h, adj, need_weights=True)
                weights.append(att)
            else:
                h = layer(h, adj)
        if need_weights:
            return h, weights
        return h

    encode = forward


class Decoder(nn.Module):
    """Mirror of the encoder: embeddings back to raw feature space."""

    def __init__(self, config: GatConfig):
        super().__init__()
        self.config = config
        self.layers = _stack(config, config.hidden, config.in_dim)

    def forward(self, z, adj):
        for layer in self.layers:
            z = layer(z, adj)
        return z

    decode = forward


def feature_loss(x, x_rec):
    """Sum over nodes of the L2 reconstruction error, averaged over the batch."""
    if x.shape != x_rec.shape:
        raise ShapeMismatch(f"{tuple(x.shape)} vs {tuple(x_rec.shape)}")
    return torch.linalg.vector_norm(x - x_rec, dim=-1).sum(dim=-1).mean()


def structure_loss(z, adj):
    """-sum log sigmoid(z_i . z_j) over directed edges, averaged over the batch.

    Self-loops are excluded; only first-order neighbour pairs contribute.
    """
    logits = torch.bmm(z, z.transpose(1, 2))
    eye = torch.eye(adj.shape[1], dtype=torch.bool, device=adj.device)
    mask = (adj > 0) & ~eye
    per_graph = -(F.logsigmoid(logits) * mask).sum(dim=(1, 2))
    return per_graph.mean()


@dataclass
class FeatureStats:
    """Per-dimension standardisation statistics (z-score, zero-std guarded)."""

    mean: torch.Tensor
    std: torch.Tensor

    @classmethod
    def fit(cls, features):
        """Fit over all nodes of all graphs. ``features``: iterable of [N, F] arrays."""
        flat = torch.cat([torch.as_tensor(f, dtype=torch.float32).reshape(-1, np.shape(f)[-1])
                          for f in features], dim=0)
        mean = flat.mean(dim=0)
        std = flat.std(dim=0, unbiased=False)
        std = torch.where(std > 0, std, torch.ones_like(std))
        return cls(mean=mean, std=std)

    def apply(self, features):
        x = torch.as_tensor(features, dtype=torch.float32)
        return (x - self.mean) / self.std


def _batches(graphs, batch_size, generator):
    """Group same-sized graphs and yield shuffled index batches each call."""
    by_n = {}
    for idx, (feats, _) in enumerate(graphs):
        by_n.setdefault(np.shape(feats)[0], []).append(idx)
    order = []
    for n in sorted(by_n):
        idxs = by_n[n]
        perm = torch.randperm(len(idxs), generator=generator).tolist()
        for lo in range(0, len(idxs), batch_size):
            order.append([idxs[p] for p in perm[lo:lo + batch_size]])
    perm = torch.randperm(len(order), generator=generator).tolist()
    return [order[p] for p in perm]


def train_autoencoder(graphs, config: GatConfig, epochs, log_cb=None):
    """Train encoder+decoder on ``graphs`` (list of ``(features [N,F], adj [N,N])``).

    Features are z-scored with stats fitted on the whole dataset before
    training.  Returns ``(encoder, decoder, stats, history)`` where history
    holds per-epoch mean losses ``{"total", "feature", "structure"}``.
    Raises DivergedLoss on a non-finite loss.
    """
    if not graphs:
        raise ValueError("no graphs to train on")
    torch.manual_seed(config.seed)
    stats = FeatureStats.fit([f for f, _ in graphs])
    prepped = [
        (stats.apply(f), torch.as_tensor(a, dtype=torch.float32))
        for f, a in graphs
    ]
    encoder = Encoder(config)
    decoder = Decoder(config)
    opt = torch.optim.Adam(list(encoder.parameters()) + list(decoder.parameters()), lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)
    history = []
    for epoch in range(epochs):
        sums = {"total": 0.0, "feature": 0.0, "structure": 0.0}
        count = 0
        for batch in _batches(prepped, config.batch_size, gen):
            x = torch.stack([prepped[i][0] for i in batch])
            adj = torch.stack([prepped[i][1] for i in batch])
            z = encoder(x, adj)
            x_rec = decoder(z, adj)
            lf = feature_loss(x, x_rec)
            ls = structure_loss(z, adj)
            loss = lf + ls
            if not torch.isfinite(loss):
                raise DivergedLoss(f"epoch {epoch}: loss {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums["total"] += loss.item() * len(batch)
            sums["feature"] += lf.item() * len(batch)
            sums["structure"] += ls.item() * len(batch)
            count += len(batch)
        entry = {k: v / count for k, v in sums.items()}
        history.append(entry)
        if log_cb is not None:
            log_cb(epoch, entry)
    return encoder, decoder, stats, history


def save_encoder_archive(path, encoder: Encoder, stats: FeatureStats):
    """Persist the encoder weights plus preprocessing stats (versioned)."""
    payload = {
        "version": ARCHIVE_VERSION,
        "config": asdict(encoder.config),
        "mean": stats.mean,
        "std": stats.std,
        "encoder_state": encoder.state_dict(),
    }
    torch.save(payload, path)


def load_encoder_archive(path):
    """Load an encoder archive. Returns ``(encoder, stats)``; encoder in eval mode."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != ARCHIVE_VERSION:
        raise ValueError(f"unsupported archive version {version!r}")
    config = GatConfig(**payload["config"])
    encoder = Encoder(config)
    encoder.load_state_dict(payload["encoder_state"])
    encoder.eval()
    stats = FeatureStats(mean=payload["mean"], std=payload["std"])
    return encoder, stats
