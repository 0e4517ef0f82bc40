"""Mean-pooled embedding classifier with exact analytical gradients.

The model is deliberately tiny: token embeddings are averaged over the
sequence and fed to a linear two-class head. All parameters live in one flat
float64 vector, so training, unlearning, importance weighting and
checkpointing can treat the model as a plain point in R^n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput, NumericalError

INIT_SCALE = 0.1


@dataclass(frozen=True)
class ModelArch:
    """Classifier dimensions; fixes the flat parameter layout.

    Layout: vocab_size*embed_dim embedding entries (row per token), then
    num_classes*embed_dim head weights, then num_classes head biases.
    """

    vocab_size: int
    embed_dim: int
    num_classes: int = 2

    def __post_init__(self):
        if self.vocab_size < 2:
            raise InvalidInput(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.embed_dim < 1:
            raise InvalidInput(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.num_classes != 2:
            raise InvalidInput(f"only binary heads are supported, got num_classes={self.num_classes}")

    @property
    def parameter_count(self) -> int:
        return self.vocab_size * self.embed_dim + self.embed_dim * self.num_classes + self.num_classes

    def split(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of a flat vector as (embeddings, head_weights, head_bias)."""
        v, d, c = self.vocab_size, self.embed_dim, self.num_classes
        emb = values[: v * d].reshape(v, d)
        head_w = values[v * d : v * d + d * c].reshape(c, d)
        head_b = values[v * d + d * c :]
        return emb, head_w, head_b


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Immutable flat parameter vector tied to a ModelArch."""

    values: np.ndarray
    arch: ModelArch

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.arch.parameter_count:
            raise InvalidInput(
                f"expected {self.arch.parameter_count} parameters, got array of shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericalError("parameter vector contains non-finite entries")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class Gradient:
    """Flat gradient aligned with a ParamVector of the same length."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidInput(f"gradient must be one-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("gradient contains non-finite entries")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def init_params(arch: ModelArch, seed: int) -> ParamVector:
    """Fresh parameters, uniform in [-INIT_SCALE, INIT_SCALE] under a seeded generator."""
    rng = np.random.default_rng(seed)
    return ParamVector(rng.uniform(-INIT_SCALE, INIT_SCALE, size=arch.parameter_count), arch)


def _check_tokens(arch: ModelArch, tokens: Sequence[int]) -> np.ndarray:
    toks = np.asarray(tokens, dtype=np.int64)
    if toks.ndim != 1 or toks.size == 0:
        raise InvalidInput("token sequence must be a non-empty 1-D sequence of ids")
    if toks.min() < 0 or toks.max() >= arch.vocab_size:
        raise InvalidInput(
            f"token id out of range for vocab_size={arch.vocab_size}: "
            f"ids span [{toks.min()}, {toks.max()}]"
        )
    return toks


def _check_arch(arch: ModelArch, params: ParamVector) -> None:
    if params.arch != arch:
        raise InvalidInput(f"parameter vector built for {params.arch} used with {arch}")


def _check_label(label: int) -> int:
    if label not in (0, 1):
        raise InvalidInput(f"label must be 0 or 1, got {label!r}")
    return int(label)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def forward(arch: ModelArch, params: ParamVector, tokens: Sequence[int]) -> np.ndarray:
    """Logits for one token sequence: head applied to the mean pooled embedding."""
    _check_arch(arch, params)
    toks = _check_tokens(arch, tokens)
    emb, head_w, head_b = arch.split(params.values)
    pooled = emb[toks].mean(axis=0)
    return head_w @ pooled + head_b


def loss_ce(logits: Sequence[float], label: int) -> float:
    """Softmax cross-entropy, log-sum-exp stabilized."""
    label = _check_label(label)
    logits = np.asarray(logits, dtype=np.float64)
    top = logits.max()
    return float(top + np.log(np.exp(logits - top).sum()) - logits[label])


def grad_ce(arch: ModelArch, params: ParamVector, tokens: Sequence[int], label: int) -> Gradient:
    """Exact gradient of loss_ce(forward(...)) w.r.t. every parameter.

    Embedding rows for tokens absent from the sequence are exactly zero.
    """
    _check_arch(arch, params)
    toks = _check_tokens(arch, tokens)
    label = _check_label(label)
    emb, head_w, head_b = arch.split(params.values)
    pooled = emb[toks].mean(axis=0)
    probs = _softmax(head_w @ pooled + head_b)
    delta = probs.copy()
    delta[label] -= 1.0

    grad = np.zeros(arch.parameter_count)
    g_emb, g_w, g_b = arch.split(grad)
    g_b[:] = delta
    g_w[:] = np.outer(delta, pooled)
    np.add.at(g_emb, toks, (head_w.T @ delta) / toks.size)
    return Gradient(grad)


def apply_step(params: ParamVector, grad: Gradient, learning_rate: float) -> ParamVector:
    """One plain gradient-descent step; returns a new vector, never mutates."""
    if learning_rate < 0:
        raise InvalidInput(f"learning_rate must be >= 0, got {learning_rate}")
    if len(grad) != len(params):
        raise InvalidInput(f"gradient length {len(grad)} does not match parameter length {len(params)}")
    return ParamVector(params.values - learning_rate * grad.values, params.arch)


def ce_batch(arch: ModelArch, params: ParamVector, samples) -> tuple[float, Gradient]:
    """Mean cross-entropy over a batch and its exact gradient.

    ``samples`` is any sequence of objects with .tokens and .label.
    """
    if len(samples) == 0:
        raise InvalidInput("batch must be non-empty")
    _check_arch(arch, params)
    emb, head_w, head_b = arch.split(params.values)
    grad = np.zeros(arch.parameter_count)
    g_emb, g_w, g_b = arch.split(grad)
    total = 0.0
    for sample in samples:
        toks = _check_tokens(arch, sample.tokens)
        label = _check_label(sample.label)
        pooled = emb[toks].mean(axis=0)
        logits = head_w @ pooled + head_b
        top = logits.max()
        total += top + np.log(np.exp(logits - top).sum()) - logits[label]
        delta = _softmax(logits)
        delta[label] -= 1.0
        g_b += delta
        g_w += np.outer(delta, pooled)
        np.add.at(g_emb, toks, (head_w.T @ delta) / toks.size)
    grad /= len(samples)
    return float(total / len(samples)), Gradient(grad)


def mean_ce(arch: ModelArch, params: ParamVector, samples) -> float:
    """Mean cross-entropy over a set of samples (no gradient)."""
    if len(samples) == 0:
        raise InvalidInput("cannot average the loss of an empty sample set")
    return float(
        np.mean([loss_ce(forward(arch, params, s.tokens), s.label) for s in samples])
    )


def train_ce(
    arch: ModelArch,
    start: ParamVector,
    samples,
    *,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    epoch_callback: Callable[[int, ParamVector], None] | None = None,
) -> ParamVector:
    """Mini-batch gradient descent on mean cross-entropy.

    Shuffles once per epoch under a generator seeded with ``seed``; with
    epochs=0 the start vector is returned unchanged.
    """
    if epochs < 0:
        raise InvalidInput(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise InvalidInput(f"batch_size must be >= 1, got {batch_size}")
    if len(samples) == 0:
        raise InvalidInput("training set must be non-empty")
    _check_arch(arch, start)
    rng = np.random.default_rng(seed)
    params = start
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(samples))
        for lo in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[lo : lo + batch_size]]
            _, grad = ce_batch(arch, params, batch)
            params = apply_step(params, grad, learning_rate)
        if epoch_callback is not None:
            epoch_callback(epoch, params)
    return params
