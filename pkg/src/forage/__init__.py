"""Long-document question answering by foraging a raw document with anchored tools.

The loop keeps two stores apart: a procedural trace of (action, observation)
steps that steers exploration, and an epistemic state of anchored statements
that is the only input to the final answer.
"""

from .actions import Action, make_action, parse_action
from .controller import (
    AnswerRequest,
    Backends,
    EpisodeConfig,
    EpisodeResult,
    Instance,
    answer_decoupled,
    answer_react,
    dispatch_action,
    run_episode,
)
from .diagnosis import GapDiagnosis, diagnose, is_terminal, parse_diagnosis
from .env import Anchor, DocumentEnv
from .gateway import BackendConfig, ChatRequest, ChatResponse, CostLedger, HttpChatBackend, MockBackend, Usage
from .harness import (
    BenchmarkReport,
    episode_cost,
    middle_truncate,
    run_benchmark,
    run_full_context_baseline,
    score,
    token_efficiency,
)
from .state import EpistemicState, EpistemicUnit, GroundingMode, commit, render

__version__ = "0.1.0"

__all__ = [
    "Action", "Anchor", "AnswerRequest", "BackendConfig", "Backends", "BenchmarkReport",
    "ChatRequest", "ChatResponse", "CostLedger", "DocumentEnv", "EpisodeConfig", "EpisodeResult",
    "EpistemicState", "EpistemicUnit", "GapDiagnosis", "GroundingMode", "HttpChatBackend",
    "Instance", "MockBackend", "Usage", "answer_decoupled", "answer_react", "commit", "diagnose",
    "dispatch_action", "episode_cost", "is_terminal", "make_action", "middle_truncate",
    "parse_action", "parse_diagnosis", "render", "run_benchmark", "run_episode",
    "run_full_context_baseline", "score", "token_efficiency",
]
