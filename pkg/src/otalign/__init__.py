"""Entity alignment between two knowledge graphs.

Graph-convolutional embeddings with relation-aware aggregation, trained with a
reliability-weighted margin loss on prior seeds plus pseudo labels that are
re-derived each round by a conflict-free greedy transport matcher.
"""

from otalign.config import LossConfig, PipelineConfig
from otalign.embedding import ModelParams, forward
from otalign.evaluation import EvalReport, evaluate
from otalign.kg import AlignmentSet, KgPair, KnowledgeGraph
from otalign.kernels import BACKEND
from otalign.matching import RectifyConfig, TransportPlan, greedy_ot_pseudo_label
from otalign.synth import SynthSpec, generate_synthetic_pair
from otalign.training import run_pipeline

__all__ = [
    "AlignmentSet", "BACKEND", "EvalReport", "KgPair", "KnowledgeGraph", "LossConfig",
    "ModelParams", "PipelineConfig", "RectifyConfig", "SynthSpec", "TransportPlan",
    "evaluate", "forward", "generate_synthetic_pair", "greedy_ot_pseudo_label", "run_pipeline",
]
