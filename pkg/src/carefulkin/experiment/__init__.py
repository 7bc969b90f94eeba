"""Dataset assembly, cross-validation, statistics and synthetic cohorts."""

from .container import read_dataset, write_dataset
from .cv import CvReport, aggregate_folds, loso_cross_validate, subset_analysis
from .dataset import (
    CLASS_CAP,
    PADDED_FRAMES,
    RESAMPLED_FRAMES,
    DatasetTensor,
    Layout,
    Subset,
    Task,
    assemble,
    balance_classes,
    filter_subset,
    standardize,
    to_resampled,
)
from .stats import OutlierReport, kruskal_wallis, outlier_subject_report
from .synth import SynthConfig, generate_synthetic_trials, minimum_jerk
