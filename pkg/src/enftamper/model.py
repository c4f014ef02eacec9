"""The fusion classifier: two convolutional deep-feature branches joined with
coefficient DNN paths, sigmoid-gated attention over the concatenated shallow
and deep features, and a dense softmax classifier head.

Feature families are z-scored with training-set statistics (scalar mean/std
per matrix family, per-coordinate for the shallow values and coefficients)
before entering the network; the statistics travel with the checkpoint.
"""

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .features import FeatureMatrix, FitCoefficients, ShallowFeatures
from .nnet import (
    Adam,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    ReLU,
    Sigmoid,
    Softmax,
    bce_loss,
    concat_backward,
    concat_forward,
    lr_schedule,
)

_EVAL_CHUNK = 16

GENUINE, TAMPERED = 0, 1


@dataclass(frozen=True)
class TamperNetConfig:
    m_phase: int
    m_freq: int
    phase_conv_blocks: int = 2
    freq_conv_blocks: int = 3
    conv_filters: tuple = (32, 64, 128)
    coeff_dnn: tuple = (32, 32)
    branch_dense: int = 1024
    classifier_dense: tuple = (1024, 256)
    dropout: float = 0.2
    scale_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be in (0, 1]")
        for blocks, m, name in ((self.phase_conv_blocks, self.m_phase, "phase"),
                                (self.freq_conv_blocks, self.m_freq, "freq")):
            if len(self.conv_filters) < blocks:
                raise ValueError("conv_filters shorter than the block count")
            if m < 3 ** blocks:
                raise ValueError(
                    f"{name} matrix dim {m} too small for {blocks} pooling stages")

    def width(self, w: int) -> int:
        return max(1, int(round(w * self.scale_factor)))


@dataclass
class FeatureBundle:
    """Everything the classifier sees for one clip."""

    shallow: ShallowFeatures
    phase_matrix: FeatureMatrix
    freq_matrix: FeatureMatrix
    phase_coeffs: FitCoefficients
    freq_coeffs: FitCoefficients
    label: int | None = None
    source_id: str = ""


@dataclass(frozen=True)
class FeatureMask:
    """Feature-family switches for ablations; disabled families are zeroed."""

    shallow: bool = True
    phase_matrix: bool = True
    freq_matrix: bool = True
    phase_coeffs: bool = True
    freq_coeffs: bool = True

SHALLOW_ONLY = FeatureMask(True, False, False, False, False)
PHASE_DEEP_ONLY = FeatureMask(False, True, False, True, False)
FREQ_DEEP_ONLY = FeatureMask(False, False, True, False, True)


@dataclass
class Standardizer:
    shallow_mean: np.ndarray
    shallow_std: np.ndarray
    pcoef_mean: np.ndarray
    pcoef_std: np.ndarray
    fcoef_mean: np.ndarray
    fcoef_std: np.ndarray
    pmat_mean: float
    pmat_std: float
    fmat_mean: float
    fmat_std: float

    @staticmethod
    def _safe(std):
        return np.where(np.asarray(std) > 0.0, std, 1.0)

    @classmethod
    def fit(cls, bundles) -> "Standardizer":
        sh = np.stack([b.shallow.as_array() for b in bundles])
        pc = np.stack([b.phase_coeffs.coeffs for b in bundles])
        fc = np.stack([b.freq_coeffs.coeffs for b in bundles])
        pm = np.stack([b.phase_matrix.values for b in bundles])
        fm = np.stack([b.freq_matrix.values for b in bundles])
        return cls(
            shallow_mean=sh.mean(axis=0), shallow_std=cls._safe(sh.std(axis=0)),
            pcoef_mean=pc.mean(axis=0), pcoef_std=cls._safe(pc.std(axis=0)),
            fcoef_mean=fc.mean(axis=0), fcoef_std=cls._safe(fc.std(axis=0)),
            pmat_mean=float(pm.mean()), pmat_std=float(cls._safe(pm.std())),
            fmat_mean=float(fm.mean()), fmat_std=float(cls._safe(fm.std())),
        )

    def to_dict(self):
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        arr = {k: np.asarray(v, dtype=np.float64) if isinstance(v, list) else v
               for k, v in d.items()}
        return cls(**arr)


def stack_batch(bundles, stdz: Standardizer, mask: FeatureMask | None = None):
    """Standardize and stack bundles into batched input arrays and labels."""
    mask = mask or FeatureMask()
    sh = np.stack([b.shallow.as_array() for b in bundles])
    pc = np.stack([b.phase_coeffs.coeffs for b in bundles])
    fc = np.stack([b.freq_coeffs.coeffs for b in bundles])
    pm = np.stack([b.phase_matrix.values for b in bundles])[..., None]
    fm = np.stack([b.freq_matrix.values for b in bundles])[..., None]
    batch = {
        "shallow": (sh - stdz.shallow_mean) / stdz.shallow_std,
        "pcoef": (pc - stdz.pcoef_mean) / stdz.pcoef_std,
        "fcoef": (fc - stdz.fcoef_mean) / stdz.fcoef_std,
        "pmat": (pm - stdz.pmat_mean) / stdz.pmat_std,
        "fmat": (fm - stdz.fmat_mean) / stdz.fmat_std,
    }
    for key, on in (("shallow", mask.shallow), ("pmat", mask.phase_matrix),
                    ("fmat", mask.freq_matrix), ("pcoef", mask.phase_coeffs),
                    ("fcoef", mask.freq_coeffs)):
        if not on:
            batch[key] = np.zeros_like(batch[key])
    labels = None
    if all(b.label is not None for b in bundles):
        labels = np.array([b.label for b in bundles], dtype=np.int64)
    return batch, labels


class _ConvBranch:
    """Conv blocks -> flatten -> dense, spliced with the coefficient path."""

    def __init__(self, cfg: TamperNetConfig, m, blocks, rng, prefix):
        self.prefix = prefix
        self.conv = []
        c_in = 1
        dim = m
        for bi in range(blocks):
            c_out = cfg.conv_filters[bi]
            self.conv.append(Conv2D(c_in, c_out, rng))
            self.conv.append(ReLU())
            self.conv.append(Conv2D(c_out, c_out, rng))
            self.conv.append(ReLU())
            self.conv.append(MaxPool2D(3))
            c_in = c_out
            dim //= 3
        self.flat_dim = dim * dim * c_in
        self.flatten = Flatten()
        bd = cfg.width(cfg.branch_dense)
        self.dense_mat = Dense(self.flat_dim, bd, rng)
        self.relu_mat = ReLU()
        self.coeff = []
        c_prev = 18
        for width in cfg.coeff_dnn:
            self.coeff.append(Dense(c_prev, width, rng))
            self.coeff.append(ReLU())
            c_prev = width
        self.dense_out = Dense(bd + c_prev, bd, rng)
        self.relu_out = ReLU()
        self.out_dim = bd

    def layers(self):
        named = []
        for i, lay in enumerate(self.conv):
            named.append((f"{self.prefix}.conv{i}", lay))
        named.append((f"{self.prefix}.dense_mat", self.dense_mat))
        for i, lay in enumerate(self.coeff):
            named.append((f"{self.prefix}.coeff{i}", lay))
        named.append((f"{self.prefix}.dense_out", self.dense_out))
        return named

    def forward(self, mat, coeffs, training, rng):
        h = mat
        for lay in self.conv:
            h = lay.forward(h, training, rng)
        h = self.relu_mat.forward(self.dense_mat.forward(self.flatten.forward(h)))
        g = coeffs
        for lay in self.coeff:
            g = lay.forward(g, training, rng)
        z, self._sizes = concat_forward([h, g])
        return self.relu_out.forward(self.dense_out.forward(z))

    def backward(self, dout):
        dz = self.dense_out.backward(self.relu_out.backward(dout))
        dh, dg = concat_backward(dz, self._sizes)
        for lay in reversed(self.coeff):
            dg = lay.backward(dg)
        dh = self.flatten.backward(self.dense_mat.backward(self.relu_mat.backward(dh)))
        for lay in reversed(self.conv):
            dh = lay.backward(dh)
        return dh, dg


class TamperNet:
    """Fig-style fusion network over one FeatureBundle batch."""

    def __init__(self, cfg: TamperNetConfig, seed=0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.phase_branch = _ConvBranch(cfg, cfg.m_phase, cfg.phase_conv_blocks, rng, "pb")
        self.freq_branch = _ConvBranch(cfg, cfg.m_freq, cfg.freq_conv_blocks, rng, "fb")
        L = 3 + self.phase_branch.out_dim + self.freq_branch.out_dim
        self.fused_dim = L
        self.attn_d1 = Dense(L, L, rng)
        self.attn_relu = ReLU()
        self.attn_d2 = Dense(L, L, rng, init="glorot")
        self.attn_sig = Sigmoid()
        c1 = cfg.width(cfg.classifier_dense[0])
        c2 = cfg.width(cfg.classifier_dense[1])
        self.cls_d1 = Dense(L, c1, rng)
        self.cls_relu1 = ReLU()
        self.dropout = Dropout(cfg.dropout)
        self.cls_d2 = Dense(c1, c2, rng)
        self.cls_relu2 = ReLU()
        self.cls_d3 = Dense(c2, 2, rng, init="glorot")
        self.softmax = Softmax()

    def _named_layers(self):
        named = self.phase_branch.layers() + self.freq_branch.layers()
        named += [("attn_d1", self.attn_d1), ("attn_d2", self.attn_d2),
                  ("cls_d1", self.cls_d1), ("cls_d2", self.cls_d2),
                  ("cls_d3", self.cls_d3)]
        return named

    def params(self):
        return {f"{name}.{k}": v for name, lay in self._named_layers()
                for k, v in lay.params.items()}

    def grads(self):
        return {f"{name}.{k}": v for name, lay in self._named_layers()
                for k, v in lay.grads.items()}

    def zero_grads(self):
        for _, lay in self._named_layers():
            lay.zero_grads()

    def param_count(self):
        return sum(v.size for v in self.params().values())

    def snapshot(self):
        return {k: v.copy() for k, v in self.params().items()}

    def restore(self, snap):
        for k, v in self.params().items():
            v[...] = snap[k]

    def attention_fuse(self, shallow, deep_phase, deep_freq):
        """Gate the concatenated feature vector with learned sigmoid weights."""
        z, self._fuse_sizes = concat_forward([shallow, deep_phase, deep_freq])
        w = self.attn_sig.forward(self.attn_d2.forward(
            self.attn_relu.forward(self.attn_d1.forward(z))))
        self._fuse_z, self._fuse_w = z, w
        return z * w

    def _attention_backward(self, dfused):
        dz = dfused * self._fuse_w
        dw = dfused * self._fuse_z
        dz_gate = self.attn_d1.backward(self.attn_relu.backward(
            self.attn_d2.backward(self.attn_sig.backward(dw))))
        return concat_backward(dz + dz_gate, self._fuse_sizes)

    def forward(self, batch, training=False, rng=None, return_attention=False):
        dp = self.phase_branch.forward(batch["pmat"], batch["pcoef"], training, rng)
        df = self.freq_branch.forward(batch["fmat"], batch["fcoef"], training, rng)
        fused = self.attention_fuse(batch["shallow"], dp, df)
        h = self.cls_relu1.forward(self.cls_d1.forward(fused))
        h = self.dropout.forward(h, training, rng)
        h = self.cls_relu2.forward(self.cls_d2.forward(h))
        probs = self.softmax.forward(self.cls_d3.forward(h))
        if return_attention:
            return probs, self._fuse_w
        return probs

    def backward(self, dprobs):
        dh = self.cls_d3.backward(self.softmax.backward(dprobs))
        dh = self.cls_d2.backward(self.cls_relu2.backward(dh))
        dh = self.dropout.backward(dh)
        dfused = self.cls_d1.backward(self.cls_relu1.backward(dh))
        dshallow, ddp, ddf = self._attention_backward(dfused)
        self.phase_branch.backward(ddp)
        self.freq_branch.backward(ddf)
        return dshallow

    def predict_proba(self, batch):
        n = len(batch["shallow"])
        out = np.empty((n, 2))
        for s in range(0, n, _EVAL_CHUNK):
            e = min(s + _EVAL_CHUNK, n)
            out[s:e] = self.forward({k: v[s:e] for k, v in batch.items()}, training=False)
        return out


def build_model(cfg: TamperNetConfig, seed=0) -> TamperNet:
    return TamperNet(cfg, seed)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr0: float = 1e-3
    halve_every: int = 10
    seed: int = 0
    train_frac: float = 2.0 / 3.0
    val_frac: float = 1.0 / 6.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    zero_division: bool = False

    def to_dict(self):
        d = asdict(self)
        d["confusion"] = {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}
        return d


def train(train_bundles, val_bundles, cfg: TrainConfig, net_cfg: TamperNetConfig,
          mask: FeatureMask | None = None):
    """Mini-batch Adam training with the halving schedule.

    Returns (net, standardizer, history); the network carries the parameters
    of the best-validation-accuracy epoch (earliest on ties).  History rows
    are dicts with epoch, lr, train_loss, val_loss, val_accuracy.
    """
    if not train_bundles or not val_bundles:
        raise ValueError("training and validation sets must be non-empty")
    labels_all = [b.label for b in train_bundles]
    if len(set(labels_all)) < 2:
        warnings.warn("training labels are not balanced across classes")

    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_shuffle, s_drop = ss.spawn(3)
    net = TamperNet(net_cfg, seed=s_init)
    shuffle_rng = np.random.default_rng(s_shuffle)
    drop_rng = np.random.default_rng(s_drop)

    stdz = Standardizer.fit(train_bundles)
    Xtr, ytr = stack_batch(train_bundles, stdz, mask)
    Xva, yva = stack_batch(val_bundles, stdz, mask)
    n = len(ytr)

    adam = Adam(net.params())
    history = []
    best = {"acc": -1.0, "epoch": -1, "snap": net.snapshot()}
    aborted = False
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg.lr0, cfg.halve_every)
        perm = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        try:
            for s in range(0, n, cfg.batch_size):
                idx = perm[s:s + cfg.batch_size]
                xb = {k: v[idx] for k, v in Xtr.items()}
                net.zero_grads()
                probs = net.forward(xb, training=True, rng=drop_rng)
                loss, dprobs = bce_loss(probs, ytr[idx])
                net.backward(dprobs)
                adam.step(net.params(), net.grads(), lr)
                total += loss * len(idx)
                seen += len(idx)
        except FloatingPointError:
            aborted = True
        train_loss = total / max(seen, 1)
        val_probs = net.predict_proba(Xva)
        val_loss, _ = bce_loss(val_probs, yva)
        val_acc = float((val_probs.argmax(axis=1) == yva).mean())
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                        "val_loss": val_loss, "val_accuracy": val_acc})
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            aborted = True
        if not aborted and val_acc > best["acc"]:
            best = {"acc": val_acc, "epoch": epoch, "snap": net.snapshot()}
        if aborted:
            break
    net.restore(best["snap"])
    return net, stdz, {"rows": history, "best_epoch": best["epoch"], "aborted": aborted}


def metrics_from_confusion(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    """Accuracy/precision/recall/F1 with 'tampered' as the positive class;
    zero-division cases yield 0 and set the flag."""
    total = tp + fp + tn + fn
    if total == 0:
        raise ValueError("empty confusion matrix")
    flagged = tp + fp == 0 or tp + fn == 0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, flagged = 0.0, True
    return Metrics(accuracy=(tp + tn) / total, precision=float(precision),
                   recall=float(recall), f1=float(f1),
                   tp=tp, fp=fp, tn=tn, fn=fn, zero_division=flagged)


def evaluate(net: TamperNet, stdz: Standardizer, bundles,
             mask: FeatureMask | None = None) -> Metrics:
    """Evaluate a model over labeled bundles."""
    if not bundles:
        raise ValueError("empty evaluation set")
    X, y = stack_batch(bundles, stdz, mask)
    if y is None:
        raise ValueError("evaluation requires labeled bundles")
    pred = net.predict_proba(X).argmax(axis=1)
    return metrics_from_confusion(
        tp=int(np.sum((pred == TAMPERED) & (y == TAMPERED))),
        fp=int(np.sum((pred == TAMPERED) & (y == GENUINE))),
        tn=int(np.sum((pred == GENUINE) & (y == GENUINE))),
        fn=int(np.sum((pred == GENUINE) & (y == TAMPERED))))
