"""Dependent-task offloading: DAG model, timing engine, schedulers, env."""

from .model import (
    CycleDetected,
    DepEdge,
    DisconnectedNode,
    EXEC_KIND,
    END_KIND,
    InvalidDag,
    MergedDag,
    Node,
    OWN,
    Plan,
    PlanViolation,
    Platform,
    START_KIND,
    build_user_dag,
    merge_dags,
    validate_dag,
    validate_plan,
)
from .generator import (
    GenConfig,
    InfeasibleShape,
    generate,
    generate_batch,
    generate_merged,
)
from .timing import (
    EvalResult,
    IllegalAction,
    SimState,
    evaluate_partial,
    mean_local_aft,
    reward,
)
from .schedulers import (
    SCHEDULERS,
    TooLarge,
    make_plan,
    plan_heft,
    plan_local,
    plan_optimal,
    plan_random,
    plan_remote,
    plan_round_robin,
)
from .env import Env, MaskedAction, NoEpisode
from .server import Session, serve_stdio, serve_tcp
from .bench import (
    CSV_COLUMNS,
    ExperimentConfig,
    load_dataset,
    load_experiment,
    load_plan,
    load_platform,
    replay_agent,
    run_grid,
    save_dataset,
    save_plan,
    save_platform,
    summarize,
    to_csv,
)

__all__ = [
    "CSV_COLUMNS",
    "CycleDetected",
    "DepEdge",
    "DisconnectedNode",
    "EXEC_KIND",
    "END_KIND",
    "Env",
    "EvalResult",
    "ExperimentConfig",
    "GenConfig",
    "IllegalAction",
    "InfeasibleShape",
    "InvalidDag",
    "MaskedAction",
    "MergedDag",
    "NoEpisode",
    "Node",
    "OWN",
    "Plan",
    "PlanViolation",
    "Platform",
    "SCHEDULERS",
    "START_KIND",
    "Session",
    "SimState",
    "TooLarge",
    "build_user_dag",
    "evaluate_partial",
    "generate",
    "generate_batch",
    "generate_merged",
    "load_dataset",
    "load_experiment",
    "load_plan",
    "load_platform",
    "make_plan",
    "mean_local_aft",
    "merge_dags",
    "plan_heft",
    "plan_local",
    "plan_optimal",
    "plan_random",
    "plan_remote",
    "plan_round_robin",
    "replay_agent",
    "reward",
    "run_grid",
    "save_dataset",
    "save_plan",
    "save_platform",
    "serve_stdio",
    "serve_tcp",
    "summarize",
    "to_csv",
    "validate_dag",
    "validate_plan",
]
