"""Incremental RLS classifiers and recognition-reliability datasheets."""

from ._accel import NUMBA_ENABLED
from .datasets import FeatureDataset, FrameRecord, SynthSpec, load_dataset, save_dataset, select, synth_generate
from .errors import DataIOError, EmptySelection, InvalidArgument, InvalidData, RecogError
from .evaluation import CrossMatrix, EvalResult, LearningCurve, build_mixed, cross_matrix, evaluate, incremental_curve
from .model import (
    RlsModel,
    decision_scores,
    encode_labels,
    fit_batch,
    load_checkpoint,
    new_model,
    predict,
    save_checkpoint,
    update,
)
from .reliability import (
    AccuracyDistribution,
    ConfidenceCurve,
    Datasheet,
    SubsetTrialPlan,
    confidence,
    datasheet,
    level_curve,
    sample_class_subsets,
    subset_accuracy_distribution,
)
from .temporal import FilterConfig, PredictionTrace, filter_sweep, filter_trace, iid_majority_bound, reliability_with_filter

__version__ = "0.1.0"
