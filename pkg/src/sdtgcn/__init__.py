"""Research-topic trend forecasting on dynamic citation graphs (GCN + dilated causal TCN)."""
from .baselines import GcnOnlyModel, HistoricalAverage, TcnOnlyModel, ha_predict, make_model
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import (GraphSnapshot, NormStats, PaperRecord, SnapshotSequence, TopicVocabulary,
                      build_snapshots, build_vocabulary, fit_norm_stats, load_bundle, make_windows,
                      read_records, save_bundle, split_windows)
from .metrics import EvalReport, average_runs, evaluate
from .model import SdtgcnModel, TrainConfig, weighted_loss
from .synthetic import constant_sequence, generate_synthetic
from .training import compare_models, evaluate_split, fit, gradient_check, prepare, train

__version__ = "0.1.0"
