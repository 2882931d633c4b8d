"""Training objectives: spectrogram MSE, CTC over phoneme labels, and their weighted sum.

The CTC loss runs a log-space forward-backward pass over the blank-extended
label sequence; ctc_brute_force enumerates every alignment path and exists
purely to cross-check it on small instances.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .neural import GradientTape, Tensor

log = logging.getLogger(__name__)

# 39-phone ARPAbet-style inventory used by the bundled word lexicon.
PHONE_INVENTORY = (
    "AA AE AH AO AW AY B CH D DH EH ER EY F G HH IH IY JH K L M N NG "
    "OW OY P R S SH T TH UH UW V W Y Z ZH"
).split()

CHAR_INVENTORY = tuple("abcdefghijklmnopqrstuvwxyz") + (" ",)


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weight for the joint objective: total = mse + lam * ctc."""

    lam: float = 0.001

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def mse_loss(y: np.ndarray, x: np.ndarray):
    """Mean squared error over all cells and its gradient w.r.t. y."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    diff = y - x
    value = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return value, grad


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _min_frames(labels) -> int:
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_loss(logits: np.ndarray, labels, blank: int | None = None):
    """Negative log-likelihood of a label sequence under per-frame logits.

    logits has shape (T, V+1) with the blank class at index `blank`
    (default: last). Returns (nll, gradient w.r.t. logits). A target with no
    valid alignment (T too short) yields +inf loss and a zero gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n_frames, n_classes = logits.shape
    if blank is None:
        blank = n_classes - 1
    labels = list(labels)
    if any(l < 0 or l >= n_classes or l == blank for l in labels):
        raise ValueError("labels must be non-blank class indices")

    if n_frames < _min_frames(labels):
        log.warning("CTC target of length %d is infeasible for %d frames", len(labels), n_frames)
        return math.inf, np.zeros_like(logits)

    ext = np.empty(2 * len(labels) + 1, dtype=np.intp)
    ext[0::2] = blank
    ext[1::2] = labels
    n_states = ext.size
    logp = _log_softmax(logits)
    emit = logp[:, ext]  # (T, S)

    # A state may skip its s-2 predecessor only when it is a label differing
    # from the label two states back.
    can_skip = np.zeros(n_states, dtype=bool)
    can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    neg = -np.inf
    alpha = np.full((n_frames, n_states), neg)
    alpha[0, 0] = emit[0, 0]
    if n_states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, n_frames):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([neg], prev[:-1]))
        skip = np.concatenate(([neg, neg], prev[:-2]))
        skip = np.where(can_skip, skip, neg)
        alpha[t] = emit[t] + np.logaddexp(np.logaddexp(stay, step), skip)

    tails = [alpha[-1, -1]] + ([alpha[-1, -2]] if n_states > 1 else [])
    log_total = float(np.logaddexp.reduce(tails))
    if log_total == neg:
        log.warning("CTC target has zero probability under the given logits")
        return math.inf, np.zeros_like(logits)

    # beta[t, s] excludes the emission at t: probability of completing the
    # extended sequence from state s using frames t+1..T-1.
    beta = np.full((n_frames, n_states), neg)
    beta[-1, -1] = 0.0
    if n_states > 1:
        beta[-1, -2] = 0.0
    for t in range(n_frames - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [neg]))
        skip_src = np.concatenate((nxt[2:], [neg, neg]))
        skip_ok = np.concatenate((can_skip[2:], [False, False]))
        skip = np.where(skip_ok, skip_src, neg)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip)

    occupancy = np.exp(alpha + beta - log_total)  # rows sum to 1
    class_occ = np.zeros_like(logits)
    np.add.at(class_occ, (slice(None), ext), occupancy)
    grad = np.exp(logp) - class_occ
    return -log_total, grad


def ctc_brute_force(logits: np.ndarray, labels, blank: int | None = None) -> float:
    """CTC NLL by exhaustive path enumeration; only for tiny instances."""
    logits = np.asarray(logits, dtype=np.float64)
    n_frames, n_classes = logits.shape
    if n_classes**n_frames > 10**6:
        raise ValueError(f"{n_classes}^{n_frames} paths exceed the enumeration budget")
    if blank is None:
        blank = n_classes - 1
    target = tuple(labels)
    logp = _log_softmax(logits)
    total = 0.0
    for path in itertools.product(range(n_classes), repeat=n_frames):
        collapsed = []
        prev = None
        for sym in path:
            if sym != prev and sym != blank:
                collapsed.append(sym)
            prev = sym
        if tuple(collapsed) == target:
            total += math.exp(sum(logp[t, s] for t, s in enumerate(path)))
    return math.inf if total == 0.0 else -math.log(total)


def joint_loss(mse: float, ctc: float, weights: LossWeights) -> float:
    """Weighted objective mse + lam * ctc."""
    if math.isnan(mse) or math.isnan(ctc):
        raise ValueError("loss terms must not be NaN")
    return mse + weights.lam * ctc


# --- tape-level ops, so losses participate in reverse-mode training ---


def mse_op(tape: GradientTape, pred: Tensor, target: np.ndarray, cell_weights: np.ndarray | None = None) -> Tensor:
    """Record MSE (optionally cell-weighted) against a constant target."""
    target = np.asarray(target)
    if pred.data.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {target.shape}")
    diff = pred.data - target
    if cell_weights is None:
        value = np.mean(diff * diff)
        local = 2.0 * diff / diff.size
    else:
        denom = max(float(cell_weights.sum()), 1.0)
        value = float(np.sum(cell_weights * diff * diff) / denom)
        local = 2.0 * cell_weights * diff / denom
    out = Tensor(np.asarray(value, dtype=np.float64))

    def backward(grad):
        pred.accumulate(grad * local)

    tape.record(out, backward)
    return out


def ctc_batch_op(tape: GradientTape, logits: Tensor, label_seqs, blank: int | None = None) -> Tensor:
    """Record the mean CTC loss of a (B, T, V+1) logits tensor.

    Infeasible targets are excluded from the mean with a warning (their
    gradient contribution is zero), keeping training robust to data errors.
    """
    batch = logits.data.shape[0]
    if len(label_seqs) != batch:
        raise ValueError(f"{len(label_seqs)} label sequences for batch of {batch}")
    values = []
    grads = np.zeros_like(logits.data, dtype=np.float64)
    for i, labels in enumerate(label_seqs):
        value, grad = ctc_loss(logits.data[i], labels, blank)
        if math.isinf(value):
            continue
        values.append(value)
        grads[i] = grad
    n_valid = max(len(values), 1)
    out = Tensor(np.asarray(sum(values) / n_valid, dtype=np.float64))

    def backward(grad):
        logits.accumulate(grad * grads / n_valid)

    tape.record(out, backward)
    return out


def weighted_sum_op(tape: GradientTape, a: Tensor, b: Tensor, weight: float) -> Tensor:
    """Record a + weight * b (the joint objective of the multi-task model)."""
    out = Tensor(a.data + weight * b.data)

    def backward(grad):
        a.accumulate(grad)
        b.accumulate(grad * weight)

    tape.record(out, backward)
    return out


# --- transcripts -> label indices ---


class LabelEncoder:
    """Maps transcripts to CTC label-index sequences over a fixed inventory.

    The blank index is vocab_size (one past the last real symbol).
    """

    def __init__(self, inventory, lexicon: dict | None = None):
        self.inventory = tuple(inventory)
        self.lexicon = dict(lexicon) if lexicon else None
        self._index = {sym: i for i, sym in enumerate(self.inventory)}
        if len(self._index) != len(self.inventory):
            raise ValueError("inventory contains duplicate symbols")

    @property
    def vocab_size(self) -> int:
        return len(self.inventory)

    @property
    def blank(self) -> int:
        return len(self.inventory)

    def encode(self, transcript: str):
        if self.lexicon is not None:
            symbols = []
            for word in transcript.lower().split():
                if word not in self.lexicon:
                    raise KeyError(f"word not in lexicon: {word!r}")
                symbols.extend(self.lexicon[word])
        else:
            symbols = list(transcript.lower())
        try:
            return [self._index[s] for s in symbols]
        except KeyError as exc:
            raise KeyError(f"symbol not in inventory: {exc.args[0]!r}") from None

    @classmethod
    def phonemes(cls) -> "LabelEncoder":
        """Phone-level encoder backed by the bundled word-to-phones lexicon."""
        text = resources.files("avinpaint.data").joinpath("grid_lexicon.json").read_text()
        return cls(PHONE_INVENTORY, json.loads(text))

    @classmethod
    def characters(cls) -> "LabelEncoder":
        """Character-level fallback: a-z plus space."""
        return cls(CHAR_INVENTORY)

    @classmethod
    def from_units(cls, units) -> "LabelEncoder":
        """Each whitespace-separated transcript token is itself a label unit."""
        return cls(tuple(units), {u: [u] for u in units})
