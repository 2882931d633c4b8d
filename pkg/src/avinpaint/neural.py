"""Minimal reverse-mode autodiff over numpy: dense, LSTM, and BLSTM layers.

Layers operate on (batch, time, features) arrays and record their backward
closures on a GradientTape. Each closure pushes adjoints into its input
tensors and parameters; replaying the tape in reverse yields exact gradients
with accumulation across shared parameters.
"""

import numpy as np


class Param:
    """A named trainable array with an accumulated gradient."""

    def __init__(self, name: str, data: np.ndarray, trainable: bool = True):
        self.name = name
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Tensor:
    """An intermediate value in the computation graph."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, copy=True)
        else:
            self.grad += grad


class GradientTape:
    """Records op backward closures in execution order."""

    def __init__(self):
        self._ops = []

    def record(self, out: Tensor, backward_fn) -> None:
        self._ops.append((out, backward_fn))

    def backward(self, loss: Tensor, seed=None) -> None:
        """Propagate adjoints from a recorded output back to all inputs.

        The seed defaults to ones (1.0 for the scalar-loss case). Ops whose
        outputs never received a gradient are off the loss path and skipped.
        """
        if not any(out is loss for out, _ in self._ops):
            raise ValueError("loss tensor was not recorded on this tape")
        loss.accumulate(np.ones_like(loss.data) if seed is None else np.asarray(seed))
        for out, backward_fn in reversed(self._ops):
            if out.grad is None:
                continue
            if not np.all(np.isfinite(out.grad)):
                raise FloatingPointError("non-finite gradient encountered during backward pass")
            backward_fn(out.grad)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_uniform(rng, shape, dtype):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal(rng, shape, dtype):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q.astype(dtype)


class Dense:
    """Time-distributed affine layer with an elementwise (or softmax) activation."""

    ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh", "softmax")

    def __init__(self, in_dim, out_dim, activation="linear", name="dense", rng=None, dtype=np.float32):
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation: {activation}")
        rng = rng or np.random.default_rng()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = Param(f"{name}.W", glorot_uniform(rng, (in_dim, out_dim), dtype))
        self.b = Param(f"{name}.b", np.zeros(out_dim, dtype=dtype))

    @property
    def params(self):
        return [self.W, self.b]

    def __call__(self, x: Tensor, tape: GradientTape) -> Tensor:
        if x.data.shape[-1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} input features, got {x.data.shape[-1]}")
        z = x.data @ self.W.data + self.b.data
        if self.activation == "linear":
            a = z
        elif self.activation == "relu":
            a = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            a = sigmoid(z)
        elif self.activation == "tanh":
            a = np.tanh(z)
        else:
            a = softmax(z)
        out = Tensor(a)

        def backward(grad):
            if self.activation == "linear":
                dz = grad
            elif self.activation == "relu":
                dz = grad * (a > 0)
            elif self.activation == "sigmoid":
                dz = grad * a * (1.0 - a)
            elif self.activation == "tanh":
                dz = grad * (1.0 - a * a)
            else:
                dz = (grad - np.sum(grad * a, axis=-1, keepdims=True)) * a
            flat_x = x.data.reshape(-1, self.in_dim)
            flat_dz = dz.reshape(-1, self.out_dim)
            self.W.grad += flat_x.T @ flat_dz
            self.b.grad += flat_dz.sum(axis=0)
            x.accumulate(dz @ self.W.data.T)

        tape.record(out, backward)
        return out


class LSTM:
    """Single-direction LSTM with the canonical forget-gate formulation.

    Gate layout along the 4h axis is [i, f, g, o]: i, f, o are sigmoid gates,
    g is the tanh candidate; c_t = f*c_{t-1} + i*g, h_t = o*tanh(c_t).
    Initial h and c are zero. With reverse=True the sequence is processed
    backwards and the output re-reversed to input time order.
    """

    def __init__(self, in_dim, hidden, reverse=False, name="lstm", rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        self.in_dim = in_dim
        self.hidden = hidden
        self.reverse = reverse
        self.Wx = Param(f"{name}.Wx", glorot_uniform(rng, (in_dim, 4 * hidden), dtype))
        self.Wh = Param(f"{name}.Wh", orthogonal(rng, (hidden, 4 * hidden), dtype))
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0  # forget-gate bias
        self.b = Param(f"{name}.b", bias)

    @property
    def params(self):
        return [self.Wx, self.Wh, self.b]

    def __call__(self, x: Tensor, tape: GradientTape) -> Tensor:
        if x.data.ndim != 3 or x.data.shape[-1] != self.in_dim:
            raise ValueError(f"expected (B, T, {self.in_dim}) input, got {x.data.shape}")
        data = x.data[:, ::-1, :] if self.reverse else x.data
        batch, n_steps, _ = data.shape
        h = self.hidden
        dtype = data.dtype
        gates = np.empty((batch, n_steps, 4 * h), dtype=dtype)
        cells = np.empty((batch, n_steps, h), dtype=dtype)
        tanh_c = np.empty((batch, n_steps, h), dtype=dtype)
        hidden_seq = np.empty((batch, n_steps, h), dtype=dtype)

        x_proj = data @ self.Wx.data + self.b.data
        h_prev = np.zeros((batch, h), dtype=dtype)
        c_prev = np.zeros((batch, h), dtype=dtype)
        for t in range(n_steps):
            z = x_proj[:, t] + h_prev @ self.Wh.data
            gi = sigmoid(z[:, :h])
            gf = sigmoid(z[:, h : 2 * h])
            gg = np.tanh(z[:, 2 * h : 3 * h])
            go = sigmoid(z[:, 3 * h :])
            c = gf * c_prev + gi * gg
            tc = np.tanh(c)
            gates[:, t, :h], gates[:, t, h : 2 * h] = gi, gf
            gates[:, t, 2 * h : 3 * h], gates[:, t, 3 * h :] = gg, go
            cells[:, t] = c
            tanh_c[:, t] = tc
            hidden_seq[:, t] = go * tc
            h_prev, c_prev = hidden_seq[:, t], c

        out = Tensor(hidden_seq[:, ::-1, :] if self.reverse else hidden_seq)

        def backward(grad):
            g_out = grad[:, ::-1, :] if self.reverse else grad
            dx = np.zeros_like(data)
            dWx = np.zeros_like(self.Wx.data)
            dWh = np.zeros_like(self.Wh.data)
            db = np.zeros_like(self.b.data)
            dh_next = np.zeros((batch, h), dtype=dtype)
            dc_next = np.zeros((batch, h), dtype=dtype)
            for t in reversed(range(n_steps)):
                gi = gates[:, t, :h]
                gf = gates[:, t, h : 2 * h]
                gg = gates[:, t, 2 * h : 3 * h]
                go = gates[:, t, 3 * h :]
                tc = tanh_c[:, t]
                dh = g_out[:, t] + dh_next
                do = dh * tc
                dc = dh * go * (1.0 - tc * tc) + dc_next
                di = dc * gg
                dg = dc * gi
                df = dc * cells[:, t - 1] if t > 0 else np.zeros_like(dc)
                dc_next = dc * gf
                dz = np.concatenate(
                    [di * gi * (1.0 - gi), df * gf * (1.0 - gf), dg * (1.0 - gg * gg), do * go * (1.0 - go)],
                    axis=1,
                )
                dWx += data[:, t].T @ dz
                if t > 0:
                    dWh += hidden_seq[:, t - 1].T @ dz
                db += dz.sum(axis=0)
                dx[:, t] = dz @ self.Wx.data.T
                dh_next = dz @ self.Wh.data.T
            self.Wx.grad += dWx
            self.Wh.grad += dWh
            self.b.grad += db
            x.accumulate(dx[:, ::-1, :] if self.reverse else dx)

        tape.record(out, backward)
        return out


class BLSTM:
    """Bidirectional LSTM: feature concatenation of forward and backward passes."""

    def __init__(self, in_dim, hidden, name="blstm", rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        self.fwd = LSTM(in_dim, hidden, reverse=False, name=f"{name}.fwd", rng=rng, dtype=dtype)
        self.bwd = LSTM(in_dim, hidden, reverse=True, name=f"{name}.bwd", rng=rng, dtype=dtype)

    @property
    def params(self):
        return self.fwd.params + self.bwd.params

    def __call__(self, x: Tensor, tape: GradientTape) -> Tensor:
        return concat(tape, self.fwd(x, tape), self.bwd(x, tape))


def concat(tape: GradientTape, a: Tensor, b: Tensor) -> Tensor:
    """Per-step feature concatenation of two equal-length sequences."""
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise ValueError(f"leading shape mismatch: {a.data.shape} vs {b.data.shape}")
    split = a.data.shape[-1]
    out = Tensor(np.concatenate([a.data, b.data], axis=-1))

    def backward(grad):
        a.accumulate(grad[..., :split])
        b.accumulate(grad[..., split:])

    tape.record(out, backward)
    return out


# Functional wrappers over single unbatched sequences (time, features).

def dense_forward(x: np.ndarray, layer: Dense) -> np.ndarray:
    out = layer(Tensor(np.asarray(x)[None]), GradientTape())
    return out.data[0]


def lstm_forward(x: np.ndarray, layer: LSTM) -> np.ndarray:
    out = layer(Tensor(np.asarray(x)[None]), GradientTape())
    return out.data[0]


def blstm_forward(x: np.ndarray, layer: BLSTM) -> np.ndarray:
    out = layer(Tensor(np.asarray(x)[None]), GradientTape())
    return out.data[0]


def concat_features(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"time-length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.concatenate([a, b], axis=-1)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def parameter_count(params) -> int:
    return sum(p.size for p in params)


def finite_difference_grads(loss_fn, params, step=1e-5):
    """Central-difference gradients of a scalar loss for every trainable param."""
    grads = {}
    for p in params:
        if not p.trainable:
            continue
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads[p.name] = g
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor=1e-8) -> float:
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def grad_check(loss_fn, grad_fn, params, step=1e-5):
    """Compare analytic gradients against central finite differences.

    grad_fn() must run forward+backward and return {param name: grad array};
    loss_fn() must return the scalar loss for the current parameter values.
    Returns {param name: max relative error}; frozen params are excluded.
    """
    analytic = grad_fn()
    numeric = finite_difference_grads(loss_fn, params, step)
    return {name: max_relative_error(analytic[name], numeric[name]) for name in numeric}
