"""Listwise softmax cross-entropy over one positive and k negatives.

``loss = -s_pos + logsumexp(s)``, where the sum runs over the whole list,
positive included. :class:`ToyListwiseRanker` minimises the mean loss of a
linear scorer on hashed character-3-gram overlap features; it exists to
exercise the objective end to end without a neural reranker.
"""

import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from mrag_bias._validation import check_index, check_positive_int, check_score_vector
from mrag_bias.metrics import char_ngrams


@dataclass
class ScoredList:
    scores: np.ndarray
    positive_index: int = 0

    def __post_init__(self):
        self.scores = check_score_vector(self.scores)
        self.positive_index = check_index(self.positive_index, self.scores.size)


def _logsumexp(s):
    m = s.max()
    return m + np.log(np.sum(np.exp(s - m)))


def _softmax(s):
    e = np.exp(s - s.max())
    return e / e.sum()


def listwise_loss(scores, positive_index=0):
    sl = ScoredList(scores, positive_index)
    return float(_logsumexp(sl.scores) - sl.scores[sl.positive_index])


def listwise_loss_gradient(scores, positive_index=0):
    """d loss / d scores = softmax(scores) - onehot(positive_index)."""
    sl = ScoredList(scores, positive_index)
    grad = _softmax(sl.scores)
    grad[sl.positive_index] -= 1.0
    return grad


def finite_difference_gradient(scores, positive_index=0, h=1e-5):
    """Central differences of :func:`listwise_loss`, one coordinate at a time."""
    s = check_score_vector(scores).copy()
    grad = np.empty_like(s)
    for i in range(s.size):
        orig = s[i]
        s[i] = orig + h
        up = listwise_loss(s, positive_index)
        s[i] = orig - h
        down = listwise_loss(s, positive_index)
        s[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def gradient_relative_error(scores, positive_index=0, h=1e-5):
    """``||analytic - numeric|| / max(||analytic||, ||numeric||)``."""
    a = listwise_loss_gradient(scores, positive_index)
    n = finite_difference_gradient(scores, positive_index, h)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-300)
    return float(np.linalg.norm(a - n) / denom)


# -- toy trainer -------------------------------------------------------------

def _bucket(gram, n_features):
    return zlib.crc32(gram.encode("utf-8")) % n_features


def overlap_features(query, document, n_features=256):
    """Hashed counts of character 3-grams shared by query and document (multiset overlap)."""
    out = np.zeros(n_features)
    shared = char_ngrams(query.casefold()) & char_ngrams(document.casefold())
    for gram, count in shared.items():
        out[_bucket(gram, n_features)] += count
    return out


def _instance_fields(inst):
    if isinstance(inst, dict):
        pos = inst["pos"]
        pos = pos[0] if isinstance(pos, list) else pos
        return inst["query"], pos, list(inst["neg"])
    return inst.query, inst.pos, list(inst.neg)


class ToyListwiseRanker(BaseEstimator):
    """Linear scorer trained by full-batch gradient descent on the mean listwise loss.

    ``fit`` takes a list of training instances, each with ``query``, ``pos``
    and ``neg`` (objects or dicts in the training-instance JSONL layout).
    The positive always sits at index 0 of the scored list.

    Attributes:
        coef_: learned weight vector.
        loss_curve_: mean loss at the start of every epoch, plus the final loss.
    """

    def __init__(self, n_features=256, epochs=50, learning_rate=0.1, init_scale=0.01, random_state=0):
        self.n_features = n_features
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.random_state = random_state

    def _featurize(self, instances):
        feats = []
        for inst in instances:
            query, pos, negs = _instance_fields(inst)
            feats.append(np.stack([overlap_features(query, d, self.n_features) for d in [pos, *negs]]))
        return feats

    def _mean_loss_and_grad(self, feats, w):
        total = 0.0
        grad = np.zeros_like(w)
        for x in feats:
            with np.errstate(over="ignore", invalid="ignore"):
                s = x @ w
            if not np.all(np.isfinite(s)):
                return np.inf, grad
            total += listwise_loss(s, 0)
            grad += x.T @ listwise_loss_gradient(s, 0)
        return total / len(feats), grad / len(feats)

    def fit(self, X, y=None):
        check_positive_int(self.n_features, "n_features")
        epochs = check_positive_int(self.epochs, "epochs")
        if len(X) == 0:
            raise ValueError("ToyListwiseRanker.fit needs at least one instance")
        feats = self._featurize(X)
        rng = np.random.default_rng(self.random_state)
        w = rng.normal(0.0, self.init_scale, self.n_features)
        curve = []
        for epoch in range(epochs):
            loss, grad = self._mean_loss_and_grad(feats, w)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            curve.append(loss)
            w = w - self.learning_rate * grad
        loss, _ = self._mean_loss_and_grad(feats, w)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epochs}")
        curve.append(loss)
        self.coef_ = w
        self.loss_curve_ = curve
        return self

    def decision_function(self, query, documents):
        check_is_fitted(self, "coef_")
        return np.array([overlap_features(query, d, self.n_features) @ self.coef_ for d in documents])

    def predict(self, X):
        """Score lists (positive first) for each instance."""
        check_is_fitted(self, "coef_")
        return [x @ self.coef_ for x in self._featurize(X)]

    def score(self, X, y=None):
        """Fraction of instances whose positive outscores every negative."""
        return float(np.mean([s[0] > s[1:].max() if s.size > 1 else True for s in self.predict(X)]))


def train_toy_scorer(instances, epochs=50, learning_rate=0.1, seed=0, n_features=256):
    model = ToyListwiseRanker(n_features=n_features, epochs=epochs, learning_rate=learning_rate,
                              random_state=seed).fit(instances)
    return {"scorer": model, "loss_curve": list(model.loss_curve_)}
