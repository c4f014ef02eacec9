"""Minimal dense/convolutional layer set with exact backward passes and Adam.

Everything runs in double precision on numpy arrays.  Convolutions use
3x3 kernels, stride 1 and zero 'same' padding; pooling is max over 3x3
blocks with stride 3 (trailing rows/columns that do not fill a block are
dropped).  Image tensors are (batch, height, width, channels).
"""

import numpy as np

_COL_BUDGET = 48 * 1024 * 1024  # bytes per im2col buffer


def he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: named params/grads plus forward/backward."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_grads(self):
        for k in self.grads:
            self.grads[k][...] = 0.0

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, init="he"):
        super().__init__()
        if init == "he":
            W = he_uniform(rng, (n_in, n_out), n_in)
        else:
            W = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params = {"W": W, "b": np.zeros(n_out)}
        self.grads = {"W": np.zeros_like(W), "b": np.zeros(n_out)}

    def forward(self, x, training=False, rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] += self._x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Sigmoid(Layer):
    def forward(self, x, training=False, rng=None):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


class Softmax(Layer):
    def forward(self, x, training=False, rng=None):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, dout):
        y = self._y
        return y * (dout - (dout * y).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    def __init__(self, rate):
        super().__init__()
        self.rate = float(rate)

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep  # inverted scaling
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Conv2D(Layer):
    """3x3 same-padded cross-correlation, stride 1.

    Computed as one GEMM per kernel offset on the contiguous padded input,
    accumulated into shifted output windows; this avoids im2col's large
    permuted copies.
    """

    def __init__(self, c_in, c_out, rng, ksize=3):
        super().__init__()
        self.k = ksize
        fan_in = ksize * ksize * c_in
        W = he_uniform(rng, (ksize, ksize, c_in, c_out), fan_in)
        self.params = {"W": W, "b": np.zeros(c_out)}
        self.grads = {"W": np.zeros_like(W), "b": np.zeros(c_out)}

    def forward(self, x, training=False, rng=None):
        n, h, w, c = x.shape
        k = self.k
        p = k // 2
        c_out = self.params["b"].shape[0]
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        self._xp, self._in_shape = xp, x.shape
        xf = xp.reshape(-1, c)
        y = np.empty((n, h, w, c_out))
        y[...] = self.params["b"]
        buf = np.empty((xf.shape[0], c_out))
        full = buf.reshape(n, h + 2 * p, w + 2 * p, c_out)
        for di in range(k):
            for dj in range(k):
                np.matmul(xf, self.params["W"][di, dj], out=buf)
                y += full[:, di:di + h, dj:dj + w, :]
        return y

    def backward(self, dout):
        n, h, w, c = self._in_shape
        k = self.k
        p = k // 2
        c_out = dout.shape[-1]
        xp = self._xp
        df = dout.reshape(-1, c_out)
        for di in range(k):
            for dj in range(k):
                xs = xp[:, di:di + h, dj:dj + w, :].reshape(-1, c)
                self.grads["W"][di, dj] += xs.T @ df
        self.grads["b"] += dout.sum(axis=(0, 1, 2))
        dxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                q = (df @ self.params["W"][di, dj].T).reshape(n, h, w, c)
                dxp[:, di:di + h, dj:dj + w, :] += q
        return dxp[:, p:p + h, p:p + w, :]


class MaxPool2D(Layer):
    """Max over size x size blocks, stride = size; partial blocks dropped."""

    def __init__(self, size=3):
        super().__init__()
        self.size = size

    def forward(self, x, training=False, rng=None):
        s = self.size
        n, h, w, c = x.shape
        ho, wo = h // s, w // s
        if ho == 0 or wo == 0:
            raise ValueError("input smaller than one pooling block")
        self._in_shape = x.shape
        crop = x[:, :ho * s, :wo * s, :]
        win = crop.reshape(n, ho, s, wo, s, c).transpose(0, 1, 3, 2, 4, 5)
        win = win.reshape(n, ho, wo, s * s, c)
        self._argmax = win.argmax(axis=3)
        out = np.take_along_axis(win, self._argmax[:, :, :, None, :], axis=3)
        return out[:, :, :, 0, :]

    def backward(self, dout):
        s = self.size
        n, h, w, c = self._in_shape
        ho, wo = h // s, w // s
        dwin = np.zeros((n, ho, wo, s * s, c))
        np.put_along_axis(dwin, self._argmax[:, :, :, None, :],
                          dout[:, :, :, None, :], axis=3)
        dcrop = dwin.reshape(n, ho, wo, s, s, c).transpose(0, 1, 3, 2, 4, 5)
        dcrop = dcrop.reshape(n, ho * s, wo * s, c)
        dx = np.zeros(self._in_shape)
        dx[:, :ho * s, :wo * s, :] = dcrop
        return dx


def concat_forward(parts):
    """Concatenate feature vectors along the last axis; returns (y, sizes)."""
    sizes = [p.shape[-1] for p in parts]
    return np.concatenate(parts, axis=-1), sizes


def concat_backward(dout, sizes):
    splits = np.cumsum(sizes)[:-1]
    return np.split(dout, splits, axis=-1)


def bce_loss(probs, labels):
    """Binary cross entropy over softmax outputs.

    probs: (N, 2) class probabilities (or a single 2-vector); labels: int
    array in {0, 1}.  Returns (mean loss, gradient w.r.t. probs); composed
    with the softmax backward this yields probs - onehot at the logits.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels))
    n = p.shape[0]
    picked = np.clip(p[np.arange(n), y], 1e-12, 1.0)
    loss = float(-np.log(picked).mean())
    dp = np.zeros_like(p)
    dp[np.arange(n), y] = -1.0 / (picked * n)
    if np.ndim(probs) == 1:
        dp = dp[0]
    return loss, dp


class Adam:
    """Adam with bias correction; one state slot per named parameter."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr):
        for name in sorted(params):
            if not np.all(np.isfinite(grads[name])):
                raise FloatingPointError(f"non-finite gradient in {name!r}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name in sorted(params):
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / (1.0 - b1 ** t)
            v_hat = self.v[name] / (1.0 - b2 ** t)
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_schedule(epoch, lr0=1e-3, halve_every=10):
    """Initial rate halved every halve_every epochs (epoch counted from 0)."""
    return lr0 * 0.5 ** (epoch // halve_every)
