"""RL agent for the dagsched environment protocol.

The agent talks to the simulator exclusively over its published
interfaces: the ndjson wire protocol (``dagsched serve``), the dataset /
platform / plan JSON formats, and the ``.jsonl`` replay transcripts.
Nothing in here imports the simulator package.
"""

from .client import (
    EnvClient,
    EnvError,
    MaskedActionError,
    NoEpisodeError,
    RemoteProtocolError,
    UnknownInstanceError,
    initial_observations,
    load_manifest,
    obs_to_graph,
)
from .gat import (
    Decoder,
    DivergedLoss,
    Encoder,
    FeatureStats,
    GatConfig,
    GraphAttentionLayer,
    ShapeMismatch,
    feature_loss,
    load_encoder_archive,
    save_encoder_archive,
    structure_loss,
    train_autoencoder,
)
from .ppo import (
    NonFiniteGradient,
    Policy,
    PpoConfig,
    Trajectory,
    collate,
    collect_rollout,
    compute_gae,
    greedy_episode,
    load_policy,
    ppo_loss,
    ppo_update,
    save_policy,
    train,
    write_transcript,
)

__all__ = [
    "Decoder",
    "DivergedLoss",
    "Encoder",
    "EnvClient",
    "EnvError",
    "FeatureStats",
    "GatConfig",
    "GraphAttentionLayer",
    "MaskedActionError",
    "NoEpisodeError",
    "NonFiniteGradient",
    "Policy",
    "PpoConfig",
    "RemoteProtocolError",
    "ShapeMismatch",
    "Trajectory",
    "UnknownInstanceError",
    "collate",
    "collect_rollout",
    "compute_gae",
    "feature_loss",
    "greedy_episode",
    "initial_observations",
    "load_encoder_archive",
    "load_manifest",
    "load_policy",
    "obs_to_graph",
    "ppo_loss",
    "ppo_update",
    "save_encoder_archive",
    "save_policy",
    "structure_loss",
    "train",
    "train_autoencoder",
    "write_transcript",
]
