"""planrag: trainable workflow planning over retrieval-augmented executors.

A compact policy (or an LLM) picks a per-question workflow from a validated
catalogue, a multi-turn orchestrator executes it against BM25 retrieval and
chat-backed executors, and PPO trains the policy against token-level F1
minus a scaled cost penalty.
"""

from .workflow import (
    ExecutorId,
    PhaseKind,
    WorkflowPlan,
    WorkflowParseError,
    parse_workflow,
    validate,
    enumerate_valid,
    check_plan_text,
    plan_of,
)
from .corpus import Document, Index, build_index, load_corpus_jsonl, tokenize
from .reward import (
    NominalCostTable,
    DEFAULT_COSTS,
    RewardBreakdown,
    normalize_answer,
    token_f1,
    token_cost_scaled,
    turn_cost,
    cost_penalty,
    format_penalty,
    total_reward,
)
from .gateway import (
    ChatClient,
    ChatMessage,
    ChatReply,
    GatewayConfig,
    ModelPrice,
    PricingTable,
    TokenUsage,
    ZERO_USAGE,
    TransportError,
    ProtocolError,
    DecodeError,
)
from .context import (
    DecompositionMode,
    Observation,
    RolloutContext,
    SubQuestionSlot,
    TurnRecord,
    new_context,
    render_observation,
)
from .executors import ExecutorSuite, GatewayBackend, ExecutorError
from .policy import (
    PolicyParams,
    init_params,
    featurize,
    actor_forward,
    critic_forward,
    select_action,
)
from .ppo import ReplayBuffer, TrainConfig, TrajectoryStep, compute_gae, ppo_update, train
from .orchestrator import (
    CompactPlanner,
    LLMPlanner,
    ScriptedPlanner,
    OrchestratorConfig,
    RolloutError,
    RolloutResult,
    rollout,
    training_rollout_fn,
)
from .synthworld import SynthWorld, ScriptedBackend, generate_world, scripted_pricing_table
from .evaluation import DatasetError, MetricsReport, evaluate, load_dataset, report_csv, report_markdown

__version__ = "0.1.0"

__all__ = [
    "ExecutorId",
    "PhaseKind",
    "WorkflowPlan",
    "WorkflowParseError",
    "parse_workflow",
    "validate",
    "enumerate_valid",
    "check_plan_text",
    "plan_of",
    "Document",
    "Index",
    "build_index",
    "load_corpus_jsonl",
    "tokenize",
    "NominalCostTable",
    "DEFAULT_COSTS",
    "RewardBreakdown",
    "normalize_answer",
    "token_f1",
    "token_cost_scaled",
    "turn_cost",
    "cost_penalty",
    "format_penalty",
    "total_reward",
    "ChatClient",
    "ChatMessage",
    "ChatReply",
    "GatewayConfig",
    "ModelPrice",
    "PricingTable",
    "TokenUsage",
    "ZERO_USAGE",
    "TransportError",
    "ProtocolError",
    "DecodeError",
    "DecompositionMode",
    "Observation",
    "RolloutContext",
    "SubQuestionSlot",
    "TurnRecord",
    "new_context",
    "render_observation",
    "ExecutorSuite",
    "GatewayBackend",
    "ExecutorError",
    "PolicyParams",
    "init_params",
    "featurize",
    "actor_forward",
    "critic_forward",
    "select_action",
    "ReplayBuffer",
    "TrainConfig",
    "TrajectoryStep",
    "compute_gae",
    "ppo_update",
    "train",
    "CompactPlanner",
    "LLMPlanner",
    "ScriptedPlanner",
    "OrchestratorConfig",
    "RolloutError",
    "RolloutResult",
    "rollout",
    "training_rollout_fn",
    "SynthWorld",
    "ScriptedBackend",
    "generate_world",
    "scripted_pricing_table",
    "DatasetError",
    "MetricsReport",
    "evaluate",
    "load_dataset",
    "report_csv",
    "report_markdown",
    "__version__",
]
