"""Behavioral Profiling Ensemble and the baselines, theory checks and harness around it."""

from .bpe import BehavioralProfile, BPEEnsemble, bpe_predict, build_profile, build_profiles, fuse, score, weights, z_score

__version__ = "0.1.0"

__all__ = [
    "BehavioralProfile",
    "BPEEnsemble",
    "bpe_predict",
    "build_profile",
    "build_profiles",
    "fuse",
    "score",
    "weights",
    "z_score",
]
