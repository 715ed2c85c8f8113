"""Per-item topic-maps: a logistic-normal topic model fitted by variational EM, plus import/export.

The fitted model has Dirichlet(nu) topics over a vocabulary, a Gaussian
``theta_tilde`` per item with prior scale ``alpha`` and per-token topic
responsibilities.  Downstream code only sees ``softmax(theta_tilde)``.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, softmax

from .errors import SchemaError, TopicCountMismatch

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


@dataclass
class TopicModel:
    """Topic-word matrix ``beta`` (rows sum to one) over ``vocab``."""

    T: int
    vocab: list
    beta: np.ndarray
    nu: float = 0.01
    alpha: float = 1.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape != (self.T, len(self.vocab)):
            raise ValueError(f"beta has shape {self.beta.shape}, expected {(self.T, len(self.vocab))}")
        if np.any(self.beta < 0) or not np.allclose(self.beta.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("beta rows must be distributions")

    def top_words(self, k: int, n: int = 10) -> list:
        order = np.argsort(-self.beta[k], kind="stable")[:n]
        return [self.vocab[w] for w in order]


@dataclass
class TopicMap:
    item_id: str
    theta: np.ndarray


@dataclass
class TopicFit:
    """Result of :func:`fit_topics`."""

    model: TopicModel
    theta: dict  # item_id -> simplex
    theta_tilde: np.ndarray
    beta_tilde: np.ndarray
    objective_trace: list = field(default_factory=list)
    converged: bool = False

    def topic_maps(self) -> list:
        return [TopicMap(d, t) for d, t in self.theta.items()]


def tokenize(text: str) -> list:
    """Lowercase, split on non-alphanumerics and drop tokens shorter than two characters."""
    return [t for t in _TOKEN_RE.split(text.lower()) if len(t) >= 2]


def _as_tokens(doc) -> list:
    return doc.split() if isinstance(doc, str) else list(doc)


def build_vocab(documents: Sequence, min_count: int = 1) -> list:
    """Sorted list of words occurring at least ``min_count`` times.

    Documents are token sequences; a plain string is split on whitespace.
    """
    if len(documents) == 0:
        raise ValueError("no documents")
    counts = Counter()
    for doc in documents:
        counts.update(_as_tokens(doc))
    vocab = sorted(w for w, c in counts.items() if c >= min_count)
    if not vocab:
        raise ValueError(f"empty vocabulary at min_count={min_count}")
    return vocab


class _Corpus:
    """Sparse (doc, word, count) triples over a fixed vocabulary."""

    def __init__(self, docs: Sequence, vocab: Sequence[str]):
        index = {w: j for j, w in enumerate(vocab)}
        d_idx, w_idx, cnt = [], [], []
        for d, doc in enumerate(docs):
            c = Counter(index[t] for t in _as_tokens(doc) if t in index)
            for w in sorted(c):
                d_idx.append(d)
                w_idx.append(w)
                cnt.append(c[w])
        self.D, self.V = len(docs), len(vocab)
        self.doc = np.array(d_idx, dtype=np.int64)
        self.word = np.array(w_idx, dtype=np.int64)
        self.count = np.array(cnt, dtype=float)
        self.doc_len = np.bincount(self.doc, weights=self.count, minlength=self.D)


def _expected_log_beta(beta_tilde):
    return digamma(beta_tilde) - digamma(beta_tilde.sum(axis=1, keepdims=True))


def _responsibilities(corpus, theta_tilde, elog_beta):
    log_w = theta_tilde[corpus.doc] + elog_beta[:, corpus.word].T
    log_w -= logsumexp(log_w, axis=1, keepdims=True)
    return np.exp(log_w), log_w


def _doc_topic_counts(corpus, omega, T):
    out = np.zeros((corpus.D, T))
    np.add.at(out, corpus.doc, omega * corpus.count[:, None])
    return out


def _theta_objective(theta_tilde, n_dk, n_d, alpha):
    return np.sum(n_dk * theta_tilde) - n_d @ logsumexp(theta_tilde, axis=1) - np.sum(theta_tilde**2) / (2 * alpha**2)


def _ascend_theta(theta_tilde, n_dk, alpha, steps):
    """Fixed-step gradient ascent; step 1/L with L bounding the curvature, so never decreases."""
    n_d = n_dk.sum(axis=1)
    step = 1.0 / (0.5 * n_d + 1.0 / alpha**2)
    for _ in range(steps):
        grad = n_dk - n_d[:, None] * softmax(theta_tilde, axis=1) - theta_tilde / alpha**2
        theta_tilde = theta_tilde + step[:, None] * grad
    return theta_tilde


def _bound(corpus, theta_tilde, beta_tilde, omega, log_omega, nu, alpha):
    """Variational objective of the topic block, additive constants dropped."""
    elog_beta = _expected_log_beta(beta_tilde)
    n_dk = _doc_topic_counts(corpus, omega, beta_tilde.shape[0])
    value = _theta_objective(theta_tilde, n_dk, corpus.doc_len, alpha)
    wc = omega * corpus.count[:, None]
    value += np.sum(wc * (elog_beta[:, corpus.word].T - log_omega))
    value += (nu - 1.0) * elog_beta.sum()
    value -= np.sum(gammaln(beta_tilde.sum(axis=1))) - np.sum(gammaln(beta_tilde))
    value -= np.sum((beta_tilde - 1.0) * elog_beta)
    return float(value)


def fit_topics(
    corpus: Mapping[str, Sequence],
    T: int,
    max_iters: int = 100,
    seed: int = 0,
    nu: float = 0.01,
    alpha: float = 1.0,
    min_count: int = 1,
    tol: float = 1e-6,
    theta_steps: int = 25,
    init_beta_tilde: np.ndarray | None = None,
) -> TopicFit:
    """Fit topics and item topic-maps by coordinate ascent.

    Each sweep updates the token responsibilities in closed form, then the
    Dirichlet topic parameters (``nu`` plus expected counts), then takes
    gradient steps on every ``theta_tilde``.  Stops when the relative change
    of the objective falls below ``tol``; otherwise warns and returns the
    last (best) state with ``converged=False``.

    Args:
        corpus: item_id -> tokens (or whitespace-separated string).
        T: number of topics.
        init_beta_tilde: optional (T, V) starting Dirichlet parameters over
            the sorted vocabulary; drawn from ``seed`` when omitted.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    ids = list(corpus)
    docs = [corpus[d] for d in ids]
    vocab = build_vocab(docs, min_count)
    data = _Corpus(docs, vocab)
    rng = np.random.default_rng(seed)
    if init_beta_tilde is None:
        beta_tilde = nu + rng.gamma(100.0, 0.01, size=(T, data.V))
    else:
        beta_tilde = np.array(init_beta_tilde, dtype=float)
        if beta_tilde.shape != (T, data.V):
            raise ValueError(f"init_beta_tilde must have shape {(T, data.V)}")
    theta_tilde = np.zeros((data.D, T))

    trace = []
    converged = False
    for _ in range(max_iters):
        omega, log_omega = _responsibilities(data, theta_tilde, _expected_log_beta(beta_tilde))
        beta_tilde = np.full((T, data.V), nu)
        np.add.at(beta_tilde.T, data.word, omega * data.count[:, None])
        theta_tilde = _ascend_theta(theta_tilde, _doc_topic_counts(data, omega, T), alpha, theta_steps)
        trace.append(_bound(data, theta_tilde, beta_tilde, omega, log_omega, nu, alpha))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break
    if not converged:
        warnings.warn(f"topic fit did not converge in {max_iters} sweeps", RuntimeWarning, stacklevel=2)

    beta = beta_tilde / beta_tilde.sum(axis=1, keepdims=True)
    theta = softmax(theta_tilde, axis=1)
    model = TopicModel(T, vocab, beta, nu, alpha)
    return TopicFit(model, dict(zip(ids, theta)), theta_tilde, beta_tilde, trace, converged)


def normalize_topic_map(weights, T: int | None = None, item_id: str = "?") -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise SchemaError(f"item {item_id!r}: theta must be a flat list")
    if T is not None and len(w) != T:
        raise TopicCountMismatch(f"item {item_id!r}: {len(w)} topic weights, expected {T}")
    if np.any(w < 0):
        raise SchemaError(f"item {item_id!r}: negative topic weight")
    total = w.sum()
    if not total > 0:
        raise SchemaError(f"item {item_id!r}: all topic weights are zero")
    return w / total


def import_topic_maps(path, T: int | None = None) -> dict:
    """Read ``topic_maps.jsonl`` rows ``{item_id, theta}``; each row is normalised to a simplex."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                item, weights = str(row["item_id"]), row["theta"]
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad topic-map row ({exc})") from None
            theta = normalize_topic_map(weights, T, item)
            if T is None:
                T = len(theta)
            out[item] = theta
    return out


def missing_topic_maps(theta_by_item: Mapping, observations) -> list:
    """Item ids referenced by observations that have no topic-map, sorted."""
    seen = {d for obs in observations for d in obs.sigma}
    return sorted(seen - set(theta_by_item))


def write_topic_maps(path, theta_by_item: Mapping) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for item, theta in theta_by_item.items():
            fh.write(json.dumps({"item_id": item, "theta": [float(x) for x in theta]}) + "\n")


def write_topics(path, model: TopicModel) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"T": model.T, "vocab": list(model.vocab), "beta": model.beta.tolist(),
                   "nu": model.nu, "alpha": model.alpha}, fh)


def read_topics(path) -> TopicModel:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        return TopicModel(int(raw["T"]), list(raw["vocab"]), np.array(raw["beta"]),
                          raw.get("nu", 0.01), raw.get("alpha", 1.0))
    except KeyError as exc:
        raise SchemaError(f"{path}: missing field {exc.args[0]!r}") from None


def read_items(path) -> dict:
    """Read ``items.jsonl`` rows ``{item_id, text}`` into item_id -> token list."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out[str(row["item_id"])] = tokenize(row["text"])
            except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad item row ({exc})") from None
    return out


def write_items(path, texts: Mapping[str, str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for item, text in texts.items():
            fh.write(json.dumps({"item_id": item, "text": text}) + "\n")
