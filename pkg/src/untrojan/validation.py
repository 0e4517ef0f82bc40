"""Input validation helpers for the estimator layer.

Token sequences are ragged, so the usual array validators do not apply;
these helpers normalize list-like inputs into the package's own types.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Sample
from .errors import InvalidInput


def check_token_sequences(X) -> list[tuple[int, ...]]:
    """Normalize X into a list of non-empty integer tuples."""
    if isinstance(X, Dataset):
        return [s.tokens for s in X]
    sequences = []
    for i, row in enumerate(X):
        if isinstance(row, Sample):
            row = row.tokens
        toks = np.asarray(row)
        if toks.ndim != 1 or toks.size == 0:
            raise InvalidInput(f"sequence {i} must be a non-empty 1-D sequence of token ids")
        if not np.issubdtype(toks.dtype, np.integer):
            if not np.all(toks == toks.astype(np.int64)):
                raise InvalidInput(f"sequence {i} contains non-integer token ids")
        sequences.append(tuple(int(t) for t in toks))
    if not sequences:
        raise InvalidInput("X must contain at least one sequence")
    return sequences


def check_binary_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise InvalidInput(f"y must be 1-D with {n_samples} entries, got shape {y.shape}")
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidInput("labels must be 0 or 1")
    return y.astype(np.int64)


def infer_vocab_size(sequences, declared: int | None) -> int:
    """Declared vocabulary size, or the smallest one covering the data."""
    highest = max(max(seq) for seq in sequences)
    if declared is None:
        return max(highest + 1, 2)
    if highest >= declared:
        raise InvalidInput(f"token id {highest} out of range for vocab_size={declared}")
    return declared


def check_poisoned_dataset(X) -> Dataset:
    """Normalize X into a Dataset that contains at least one poisoned sample."""
    if isinstance(X, Dataset):
        ds = X
    else:
        samples = list(X)
        if not all(isinstance(s, Sample) for s in samples):
            raise InvalidInput("expected a Dataset or an iterable of Sample objects")
        ds = Dataset(samples, role="train")
    if not any(s.poisoned for s in ds):
        raise InvalidInput("dataset carries no poisoned samples to unlearn")
    return ds
