"""Scikit-learn style wrappers around the functional core.

TokenClassifier is a regular fit/predict classifier over ragged token-id
sequences. The unlearner estimators take a fitted (poisoned) classifier and
fit on the poisoned training set itself: the flagged samples are the forget
set and a size-matched clean subset is drawn for anchoring.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import model
from .data import Dataset, Sample, split_clean_subset
from .errors import InvalidInput
from .metrics import EvalSuite
from .unlearn import UnlearnConfig, unlearn_ga, unlearn_lya
from .validation import (
    check_binary_labels,
    check_poisoned_dataset,
    check_token_sequences,
    infer_vocab_size,
)


class TokenClassifier(ClassifierMixin, BaseEstimator):
    """Mean-pooled embedding classifier trained by plain gradient descent.

    X is a list of token-id sequences (ragged is fine), y holds binary
    labels. vocab_size=None infers the smallest vocabulary covering the
    training data.
    """

    def __init__(
        self,
        vocab_size=None,
        embed_dim=16,
        learning_rate=0.5,
        epochs=30,
        batch_size=32,
        seed=0,
    ):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        sequences = check_token_sequences(X)
        labels = check_binary_labels(y, len(sequences))
        arch = model.ModelArch(
            vocab_size=infer_vocab_size(sequences, self.vocab_size),
            embed_dim=self.embed_dim,
        )
        samples = [Sample(tokens=seq, label=int(lab)) for seq, lab in zip(sequences, labels)]
        curve = []
        self.params_ = model.train_ce(
            arch,
            model.init_params(arch, self.seed),
            samples,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            epoch_callback=lambda _epoch, p: curve.append(model.mean_ce(arch, p, samples)),
        )
        self.arch_ = arch
        self.loss_curve_ = curve
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this TokenClassifier instance is not fitted yet")

    def decision_function(self, X):
        self._check_fitted()
        sequences = check_token_sequences(X)
        logits = np.array(
            [model.forward(self.arch_, self.params_, seq) for seq in sequences]
        )
        return logits[:, 1] - logits[:, 0]

    def predict_proba(self, X):
        self._check_fitted()
        sequences = check_token_sequences(X)
        probs = np.empty((len(sequences), 2))
        for i, seq in enumerate(sequences):
            logits = model.forward(self.arch_, self.params_, seq)
            shifted = np.exp(logits - logits.max())
            probs[i] = shifted / shifted.sum()
        return probs

    def predict(self, X):
        # Ties resolve to class 0, matching the package's metric convention.
        self._check_fitted()
        sequences = check_token_sequences(X)
        return np.array(
            [int(np.argmax(model.forward(self.arch_, self.params_, seq))) for seq in sequences]
        )

    @classmethod
    def from_params(cls, params: model.ParamVector, **kwargs) -> "TokenClassifier":
        """Wrap an existing parameter vector (e.g. a loaded checkpoint) as a fitted classifier."""
        clf = cls(vocab_size=params.arch.vocab_size, embed_dim=params.arch.embed_dim, **kwargs)
        clf.arch_ = params.arch
        clf.params_ = params
        clf.loss_curve_ = []
        clf.classes_ = np.array([0, 1])
        return clf


def _start_params(classifier) -> model.ParamVector:
    if isinstance(classifier, model.ParamVector):
        return classifier
    if isinstance(classifier, TokenClassifier):
        classifier._check_fitted()
        return classifier.params_
    raise InvalidInput("classifier must be a fitted TokenClassifier or a ParamVector")


class _BaseUnlearner(ClassifierMixin, BaseEstimator):
    """Shared fit machinery: derive the forget/anchor subsets and run the loop."""

    def __init__(
        self,
        classifier=None,
        learning_rate=0.1,
        batch_size=32,
        max_epochs=30,
        p_thresh=0.0,
        seed=0,
    ):
        self.classifier = classifier
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.p_thresh = p_thresh
        self.seed = seed

    def _config(self) -> UnlearnConfig:
        raise NotImplementedError

    def _run(self, start, full, d_poison, d_clean, cfg, eval_suite):
        raise NotImplementedError

    def fit(self, X, y=None, eval_suite: EvalSuite | None = None):
        """Unlearn the poisoned samples flagged inside X (a Dataset or Sample list)."""
        full = check_poisoned_dataset(X)
        start = _start_params(self.classifier)
        d_poison = Dataset([s for s in full if s.poisoned], role=full.role)
        d_clean = split_clean_subset(full, len(d_poison), self.seed)
        result = self._run(start, full, d_poison, d_clean, self._config(), eval_suite)
        self.result_ = result
        self.params_ = result.final_params
        self.threshold_params_ = result.threshold_params
        self.threshold_epoch_ = result.threshold_epoch
        self.stop_reason_ = result.stop_reason
        self.history_ = list(result.history)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("this unlearner instance is not fitted yet")
        return TokenClassifier.from_params(self.params_).predict(X)


class LyaUnlearner(_BaseUnlearner):
    """Gradient ascent on the forget set with importance anchoring."""

    def __init__(
        self,
        classifier=None,
        lam=1e3,
        learning_rate=0.1,
        batch_size=32,
        max_epochs=30,
        p_thresh=0.0,
        exclude_poison_ewc=False,
        seed=0,
    ):
        super().__init__(
            classifier=classifier,
            learning_rate=learning_rate,
            batch_size=batch_size,
            max_epochs=max_epochs,
            p_thresh=p_thresh,
            seed=seed,
        )
        self.lam = lam
        self.exclude_poison_ewc = exclude_poison_ewc

    def _config(self) -> UnlearnConfig:
        return UnlearnConfig(
            lam=self.lam,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            p_thresh=self.p_thresh,
            seed=self.seed,
            exclude_poison_ewc=self.exclude_poison_ewc,
        )

    def _run(self, start, full, d_poison, d_clean, cfg, eval_suite):
        return unlearn_lya(start, full, d_poison, d_clean, cfg, eval_suite)


class GradientAscentUnlearner(_BaseUnlearner):
    """Vanilla gradient-ascent baseline (no anchoring)."""

    def _config(self) -> UnlearnConfig:
        return UnlearnConfig(
            lam=0.0,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            p_thresh=self.p_thresh,
            seed=self.seed,
        )

    def _run(self, start, full, d_poison, d_clean, cfg, eval_suite):
        return unlearn_ga(start, d_poison, cfg, eval_suite)
