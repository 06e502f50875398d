from .inference import ORACLE_MODES, evaluate, infer_dialogue, write_traces
from .metrics import EvalReport, breakdown_reports, gate_f1, joint_goal_accuracy
from .model import ABLATIONS, CSFNDST, Targets, build_vocab, gate_labels, graph_mask, make_targets
from .train import TrainConfig, TrainResult, grid_search, train

__all__ = [
    "ABLATIONS",
    "CSFNDST",
    "EvalReport",
    "ORACLE_MODES",
    "Targets",
    "TrainConfig",
    "TrainResult",
    "breakdown_reports",
    "build_vocab",
    "evaluate",
    "gate_f1",
    "gate_labels",
    "graph_mask",
    "grid_search",
    "infer_dialogue",
    "joint_goal_accuracy",
    "make_targets",
    "train",
    "write_traces",
]
