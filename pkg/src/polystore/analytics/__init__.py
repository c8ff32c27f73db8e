"""Waveform classification workload: Haar histograms, TF-IDF, cosine k-NN."""

from .cohort import DETERIORATING, MODES, STABLE, PatientSeries, WorkloadConfig, gen_cohort
from .estimators import (CosineKNNClassifier, HaarScaleHistogram, TfidfWeighting,
                         haar_patient_vector, knn_classify, tfidf_weight)
from .workload import STAGES, WorkloadResult, run_all_modes, run_workload

__all__ = [
    "CosineKNNClassifier", "DETERIORATING", "HaarScaleHistogram", "MODES", "PatientSeries",
    "STABLE", "STAGES", "TfidfWeighting", "WorkloadConfig", "WorkloadResult", "gen_cohort",
    "haar_patient_vector", "knn_classify", "run_all_modes", "run_workload", "tfidf_weight",
]
