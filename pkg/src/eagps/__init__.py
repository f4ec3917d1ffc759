"""Graph-based sequential recommendation with external attention and positional prompts."""
from .config import HyperConfig
from .data import SequenceRecord, SequenceSet, build_sequences, parse_interactions, split_train_test, synth_dataset
from .evaluator import evaluate, param_count
from .trainer import Model, build_variant, model_for

__version__ = "0.1.0"

__all__ = [
    "HyperConfig", "Model", "SequenceRecord", "SequenceSet", "build_sequences", "build_variant",
    "evaluate", "model_for", "param_count", "parse_interactions", "split_train_test", "synth_dataset",
]
