"""Pipeline configuration: one object covering extraction, features, network
widths and the training protocol, serializable to JSON and hashable so every
artifact can be checked against the settings that produced it.
"""

import hashlib
import json
from dataclasses import dataclass, asdict, field, replace

from .bandpass import BandpassSpec
from .model import TamperNetConfig, TrainConfig


@dataclass(frozen=True)
class PipelineConfig:
    profile: str = "desk"
    nominal_hz: float = 50.0
    resample_hz: int = 1000
    filter_bandwidth_hz: float = 0.6
    filter_order: int = 10000
    filter_ripple_db: float = 0.5
    filter_atten_db: float = 100.0
    n_dft: int = 32768
    fit_terms: int = 6
    # dataset-pinned matrix sizing (longest sequences); None until extraction
    max_phase_len: int | None = None
    max_freq_len: int | None = None
    # network widths (m_phase/m_freq are derived from the max lengths)
    conv_filters: tuple = (32, 64, 128)
    coeff_dnn: tuple = (32, 32)
    branch_dense: int = 128
    classifier_dense: tuple = (128, 64)
    dropout: float = 0.2
    scale_factor: float = 1.0
    # training protocol
    epochs: int = 30
    batch_size: int = 32
    lr0: float = 1e-3
    halve_every: int = 10
    seed: int = 0
    train_frac: float = 2.0 / 3.0
    val_frac: float = 1.0 / 6.0

    def __post_init__(self):
        if self.resample_hz % self.nominal_hz != 0:
            raise ValueError("analysis rate must be an integer multiple of nominal_hz")

    def bandpass_spec(self) -> BandpassSpec:
        return BandpassSpec(
            center_hz=self.nominal_hz,
            bandwidth_hz=self.filter_bandwidth_hz,
            order=self.filter_order,
            passband_ripple_db=self.filter_ripple_db,
            stopband_atten_db=self.filter_atten_db,
            sample_rate=float(self.resample_hz),
        )

    def net_config(self, m_phase: int, m_freq: int) -> TamperNetConfig:
        return TamperNetConfig(
            m_phase=m_phase,
            m_freq=m_freq,
            conv_filters=tuple(self.conv_filters),
            coeff_dnn=tuple(self.coeff_dnn),
            branch_dense=self.branch_dense,
            classifier_dense=tuple(self.classifier_dense),
            dropout=self.dropout,
            scale_factor=self.scale_factor,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr0=self.lr0,
            halve_every=self.halve_every, seed=self.seed,
            train_frac=self.train_frac, val_frac=self.val_frac,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("conv_filters", "coeff_dnn", "classifier_dense"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        for k in ("conv_filters", "coeff_dnn", "classifier_dense"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# the desk profile trains in minutes on a CPU; paper keeps the full widths
# and schedule
PROFILES = {
    "desk": PipelineConfig(),
    "paper": PipelineConfig(profile="paper", branch_dense=1024,
                            classifier_dense=(1024, 256), epochs=100),
}


def load_config(path=None, profile="desk", **overrides) -> PipelineConfig:
    """Profile defaults, optionally updated from a JSON file and overrides."""
    base = PROFILES[profile].to_dict()
    if path is not None:
        with open(path) as fh:
            base.update(json.load(fh))
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(base)


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1)


def config_hash(cfg: PipelineConfig) -> str:
    """Short digest binding artifacts to the pipeline settings that made them."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def with_max_lengths(cfg: PipelineConfig, max_phase_len: int,
                     max_freq_len: int) -> PipelineConfig:
    return replace(cfg, max_phase_len=int(max_phase_len), max_freq_len=int(max_freq_len))
