"""On-disk artifact formats: a shared container layout (JSON manifest plus
raw little-endian float64 tensor blocks), used for feature-bundle caches and
network checkpoints.  All files are schema-versioned.
"""

import json
import os
import struct
from pathlib import Path

import numpy as np

from .features import FeatureMatrix, FitCoefficients, ShallowFeatures
from .model import FeatureBundle, Standardizer, TamperNet, TamperNetConfig

BUNDLE_MAGIC = b"ENFBNDL1"
CKPT_MAGIC = b"ENFCKPT1"


class StorageError(ValueError):
    pass


def write_container(path, magic: bytes, meta: dict, arrays: dict) -> None:
    """magic | u64 json length | json meta (with tensor index) | f64 blocks."""
    index = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    meta = dict(meta, tensors=index)
    blob = json.dumps(meta, sort_keys=True).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    os.replace(tmp, path)  # atomic: partial writes never look complete


def read_container(path, magic: bytes):
    with open(path, "rb") as fh:
        head = fh.read(len(magic))
        if head != magic:
            raise StorageError(f"{path}: bad magic (expected {magic!r})")
        (jlen,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(jlen))
        blob = fh.read()
    arrays = {}
    for t in meta["tensors"]:
        n = int(np.prod(t["shape"])) if t["shape"] else 1
        start = t["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=start)
        arrays[t["name"]] = arr.reshape(t["shape"]).copy()
    return meta, arrays


def save_bundle(path, bundle: FeatureBundle, config_hash: str) -> None:
    meta = {
        "kind": "feature-bundle",
        "schema_version": 1,
        "config_hash": config_hash,
        "source_id": bundle.source_id,
        "label": bundle.label,
        "m_phase": bundle.phase_matrix.m,
        "m_freq": bundle.freq_matrix.m,
        "phase_pad": bundle.phase_matrix.pad_count,
        "freq_pad": bundle.freq_matrix.pad_count,
        "phase_rmse": bundle.phase_coeffs.rmse,
        "freq_rmse": bundle.freq_coeffs.rmse,
        "phase_fit_degenerate": bundle.phase_coeffs.degenerate,
        "freq_fit_degenerate": bundle.freq_coeffs.degenerate,
    }
    arrays = {
        "shallow": bundle.shallow.as_array(),
        "phase_matrix": bundle.phase_matrix.values,
        "freq_matrix": bundle.freq_matrix.values,
        "phase_coeffs": bundle.phase_coeffs.coeffs,
        "freq_coeffs": bundle.freq_coeffs.coeffs,
    }
    write_container(path, BUNDLE_MAGIC, meta, arrays)


def load_bundle(path) -> tuple[FeatureBundle, dict]:
    meta, arrays = read_container(path, BUNDLE_MAGIC)
    sh = arrays["shallow"]
    bundle = FeatureBundle(
        shallow=ShallowFeatures(F0=float(sh[0]), F1=float(sh[1]), Ff=float(sh[2])),
        phase_matrix=FeatureMatrix(values=arrays["phase_matrix"],
                                   m=meta["m_phase"], pad_count=meta["phase_pad"]),
        freq_matrix=FeatureMatrix(values=arrays["freq_matrix"],
                                  m=meta["m_freq"], pad_count=meta["freq_pad"]),
        phase_coeffs=FitCoefficients(coeffs=arrays["phase_coeffs"],
                                     rmse=meta["phase_rmse"],
                                     degenerate=meta["phase_fit_degenerate"]),
        freq_coeffs=FitCoefficients(coeffs=arrays["freq_coeffs"],
                                    rmse=meta["freq_rmse"],
                                    degenerate=meta["freq_fit_degenerate"]),
        label=meta["label"],
        source_id=meta["source_id"],
    )
    return bundle, meta


def save_checkpoint(path, net: TamperNet, stdz: Standardizer, config_hash: str,
                    extra: dict | None = None) -> None:
    cfg = net.cfg
    meta = {
        "kind": "tampernet-checkpoint",
        "schema_version": 1,
        "config_hash": config_hash,
        "net_config": {
            "m_phase": cfg.m_phase, "m_freq": cfg.m_freq,
            "phase_conv_blocks": cfg.phase_conv_blocks,
            "freq_conv_blocks": cfg.freq_conv_blocks,
            "conv_filters": list(cfg.conv_filters),
            "coeff_dnn": list(cfg.coeff_dnn),
            "branch_dense": cfg.branch_dense,
            "classifier_dense": list(cfg.classifier_dense),
            "dropout": cfg.dropout,
            "scale_factor": cfg.scale_factor,
        },
        "normalization": stdz.to_dict(),
    }
    if extra:
        meta.update(extra)
    write_container(path, CKPT_MAGIC, meta, net.params())


def load_checkpoint(path):
    """Returns (net, standardizer, meta) with parameters restored bit-exactly."""
    meta, arrays = read_container(path, CKPT_MAGIC)
    nc = dict(meta["net_config"])
    for k in ("conv_filters", "coeff_dnn", "classifier_dense"):
        nc[k] = tuple(nc[k])
    net = TamperNet(TamperNetConfig(**nc), seed=0)
    params = net.params()
    if set(params) != set(arrays):
        raise StorageError("checkpoint tensor set does not match the architecture")
    for k, v in params.items():
        if v.shape != arrays[k].shape:
            raise StorageError(f"checkpoint tensor {k!r} has shape {arrays[k].shape}, "
                               f"expected {v.shape}")
        v[...] = arrays[k]
    stdz = Standardizer.from_dict(meta["normalization"])
    return net, stdz, meta
