"""Audio tampering detection from electric-network-frequency (ENF) evidence.

The package turns a mono recording into ENF phase and instantaneous-frequency
sequences, derives shallow discontinuity statistics, square feature matrices
and sum-of-sines fit coefficients from them, and classifies genuine vs.
tampered audio with an attention-fused convolutional/dense network.  A
synthetic corpus generator provides labeled training and evaluation data.
"""

from .audio_io import AudioClip, read_wav, write_wav, resample
from .bandpass import BandpassSpec, EnfComponent, design_bandpass, extract_enf
from .phase import FramingParams, PhaseSequence, estimate_phase
from .instfreq import FrequencySequence, analytic_signal, instantaneous_frequency, smooth_and_trim
from .features import (
    ShallowFeatures,
    FeatureMatrix,
    FitCoefficients,
    shallow_stats,
    frame_length_for,
    build_matrix,
    fit_sum_of_sines,
)
from .model import FeatureBundle, TamperNetConfig, TamperNet, TrainConfig, train, evaluate
from .corpus import EnfModelParams, synthesize_recording, tamper_delete, tamper_insert, generate_corpus
from .config import PipelineConfig, config_hash

__version__ = "0.1.0"
