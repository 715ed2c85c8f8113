"""Surrogate personalization engine producing ground-truth datasets.

A world is a set of Dirichlet topics over a synthetic vocabulary and items
with sparse topic-maps and generated text.  Queries are short word
combinations from one topic's top words; the vanilla list ranks items by
query log-likelihood.  A profile (set of personalized topics and a true
``eta``) turns vanilla lists into personalized ones either by sampling the
generative model exactly or by a deterministic promote-to-front rule.

Randomness: every public generator takes a seed or ``np.random.Generator``.
:func:`simulate` splits its seed with ``np.random.SeedSequence`` into
world / profile / query / personalization streams, and each query's
personalization draw gets its own spawned child sequence (by query index)
so queries can be generated in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .perm_models import sample_f, sample_g
from .rankings import Permutation, QueryObservation, write_observations
from .topic_model import TopicModel, write_items, write_topic_maps, write_topics


@dataclass
class World:
    model: TopicModel
    item_ids: list
    theta: np.ndarray  # (items, T) simplex rows
    texts: dict
    primary_topic: np.ndarray

    @property
    def T(self) -> int:
        return self.model.T

    def theta_by_item(self) -> dict:
        return dict(zip(self.item_ids, self.theta))


@dataclass
class Query:
    query_id: str
    topic: int
    words: list
    relevance: np.ndarray  # per world item


@dataclass
class SyntheticProfile:
    profile_id: str
    personalized_topics: list
    eta_true: np.ndarray
    tau_true: float
    z_true: dict = field(default_factory=dict)

    def __post_init__(self):
        support = sorted(np.flatnonzero(self.eta_true).tolist())
        if support != sorted(self.personalized_topics):
            raise ValueError("eta_true support must equal personalized_topics")


@dataclass
class Dataset:
    world: World
    profile: SyntheticProfile
    observations: list
    query_topics: dict  # query_id -> topic

    @property
    def theta_by_item(self) -> dict:
        return self.world.theta_by_item()

    def ground_truth(self) -> dict:
        return {
            "profile_id": self.profile.profile_id,
            "personalized_topics": list(self.profile.personalized_topics),
            "eta_true": [float(x) for x in self.profile.eta_true],
            "tau_true": float(self.profile.tau_true),
            "z_true": {q: bool(z) for q, z in self.profile.z_true.items()},
        }


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def category_of(T: int, n_categories: int = 10) -> np.ndarray:
    """Category index of every topic; categories are contiguous blocks of topics."""
    n_categories = max(1, min(n_categories, T))
    return np.arange(T) * n_categories // T


def gen_world(T: int, vocab_size: int = 1000, items_per_topic: int = 5, seed=0,
              nu: float = 0.05, doc_len=(50, 200), n_categories: int = 10,
              category_share: float = 0.5, sibling_bias: float = 0.0) -> World:
    """Topics over a synthetic vocabulary and items with sparse topic-maps and text.

    Each topic mixes its own Dirichlet(nu) word distribution with one shared
    by its category (weight ``category_share``), so a query on one topic also
    retrieves items of sibling topics.  Every item has a primary topic and
    0-2 secondary ones, drawn from its own category with probability
    ``sibling_bias``.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    rng = _rng(seed)
    vocab = [f"w{j:04d}" for j in range(vocab_size)]
    cat = category_of(T, n_categories)
    shared = rng.dirichlet(np.full(vocab_size, nu), size=cat.max() + 1)
    beta = (1 - category_share) * rng.dirichlet(np.full(vocab_size, nu), size=T) + category_share * shared[cat]
    beta = np.maximum(beta, 1e-300)
    beta /= beta.sum(axis=1, keepdims=True)
    model = TopicModel(T, vocab, beta, nu=nu)

    n_items = T * items_per_topic
    width = len(str(n_items - 1))
    item_ids = [f"u{j:0{width}d}" for j in range(n_items)]
    theta = np.zeros((n_items, T))
    primary = np.repeat(np.arange(T), items_per_topic)
    texts = {}
    cum_beta = np.cumsum(beta, axis=1)
    for j, k in enumerate(primary):
        others = np.delete(np.arange(T), k)
        # secondary topics come from the item's own category with probability sibling_bias
        w = np.where(cat[others] == cat[k], sibling_bias / max(1, np.sum(cat[others] == cat[k])), 0.0)
        w += (1 - w.sum()) / len(others)
        extra = rng.choice(others, size=rng.integers(0, 3), replace=False, p=w)
        active = np.concatenate(([k], extra))
        theta[j, active] = rng.dirichlet([3.0] + [1.5] * len(extra))
        n_tok = rng.integers(doc_len[0], doc_len[1] + 1)
        topics = rng.choice(T, size=n_tok, p=theta[j])
        words = (cum_beta[topics] > rng.uniform(size=(n_tok, 1))).argmax(axis=1)
        texts[item_ids[j]] = " ".join(vocab[w] for w in words)
    return World(model, item_ids, theta, texts, primary)


def gen_queries(world: World, topic: int, count: int, rng=None, top_words: int = 10) -> list:
    """``count`` queries of 2-4 words drawn from ``topic``'s top words.

    Item relevance is the log-likelihood of the query words under the item's
    topic mixture.
    """
    if not 0 <= topic < world.T:
        raise ValueError(f"topic {topic} out of range")
    rng = _rng(rng)
    top = np.argsort(-world.model.beta[topic], kind="stable")[:top_words]
    word_probs = world.theta @ world.model.beta[:, top]  # (items, top_words)
    log_probs = np.log(np.maximum(word_probs, 1e-300))
    out = []
    for j in range(count):
        pick = rng.choice(len(top), size=rng.integers(2, 5), replace=False)
        out.append(Query(
            f"q{topic:03d}-{j:04d}", topic, [world.model.vocab[top[p]] for p in pick],
            log_probs[:, pick].sum(axis=1),
        ))
    return out


def gen_vanilla(relevance: Sequence[float], item_ids: Sequence[str], n: int) -> Permutation:
    """Top-``n`` items by relevance, ties broken by item id."""
    relevance = np.asarray(relevance, dtype=float)
    if n > len(item_ids):
        raise ValueError("n exceeds the number of items")
    order = np.lexsort((np.asarray(item_ids), -relevance))
    return Permutation(item_ids[j] for j in order[:n])


def gen_profile(T: int, k_personalized: int, eta_magnitude: float = 2.0, tau: float = 0.7, seed=None,
                candidates: Sequence[int] | None = None, profile_id: str = "p0") -> SyntheticProfile:
    """Profile personalized on ``k_personalized`` topics chosen uniformly (from ``candidates`` if given)."""
    pool = np.arange(T) if candidates is None else np.asarray(candidates)
    if not 1 <= k_personalized <= len(pool):
        raise ValueError("k_personalized out of range")
    rng = _rng(seed)
    topics = sorted(int(t) for t in rng.choice(pool, size=k_personalized, replace=False))
    eta = np.zeros(T)
    eta[topics] = eta_magnitude
    return SyntheticProfile(profile_id, topics, eta, tau)


def personalize_generative(sigma: Permutation, profile: SyntheticProfile, theta_by_item: Mapping,
                           lam: float, mu: float, rng=None) -> tuple:
    """Exact draw from the model: z ~ Bernoulli(tau), then pi ~ g if z else pi ~ f."""
    rng = _rng(rng)
    z = bool(rng.uniform() < profile.tau_true)
    if z:
        return sample_g(sigma, profile.eta_true, theta_by_item, lam, rng), z
    return sample_f(sigma, mu, rng), z


def personalize_deterministic(sigma: Permutation, profile: SyntheticProfile, theta_by_item: Mapping,
                              threshold: float = 0.2) -> Permutation:
    """Stable partition of sigma: items with weight > threshold on a personalized topic go first."""
    topics = list(profile.personalized_topics)
    hit = [bool(np.any(np.asarray(theta_by_item[d])[topics] > threshold)) for d in sigma]
    front = [d for d, h in zip(sigma, hit) if h]
    back = [d for d, h in zip(sigma, hit) if not h]
    return Permutation(front + back)


def query_topic_set(T: int, n_categories: int = 10) -> list:
    """The first topic of every category."""
    cat = category_of(T, n_categories)
    return [int(np.flatnonzero(cat == c)[0]) for c in range(cat.max() + 1)]


def make_observations(world: World, profile: SyntheticProfile, query_topics: Sequence[int],
                      queries_per_topic: int, n: int = 10, personalizer: str = "generative",
                      lam: float = 0.9, mu: float = 10.0, seed=0) -> Dataset:
    """Queries for each topic, vanilla top-``n`` lists and their personalized versions.

    Fills ``profile.z_true``; for the deterministic personalizer z is true
    exactly when the list was re-ranked.
    """
    if personalizer not in ("generative", "deterministic"):
        raise ValueError(f"unknown personalizer {personalizer!r}")
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    q_seq, p_seq = base.spawn(2)
    q_rng = np.random.default_rng(q_seq)
    p_seqs = p_seq.spawn(len(query_topics) * queries_per_topic)
    theta = world.theta_by_item()
    obs, topics = [], {}
    profile.z_true = {}
    for t in query_topics:
        for q in gen_queries(world, t, queries_per_topic, q_rng):
            sigma = gen_vanilla(q.relevance, world.item_ids, n)
            if personalizer == "generative":
                p_rng = np.random.default_rng(p_seqs[len(obs)])
                pi, z = personalize_generative(sigma, profile, theta, lam, mu, p_rng)
            else:
                pi = personalize_deterministic(sigma, profile, theta)
                z = pi != sigma
            obs.append(QueryObservation(q.query_id, sigma, pi))
            topics[q.query_id] = t
            profile.z_true[q.query_id] = bool(z)
    return Dataset(world, profile, obs, topics)


def simulate(T: int = 50, k_personalized: int = 3, queries_per_topic: int = 50, n: int = 10,
             n_categories: int = 10, personalizer: str = "generative", eta_magnitude: float = 2.0,
             tau: float = 0.7, lam: float = 0.9, mu: float = 10.0, items_per_topic: int = 5,
             vocab_size: int = 1000, category_share: float = 0.5, sibling_bias: float = 0.0,
             personalize_query_topics: bool = True, seed: int = 0, world: World | None = None) -> Dataset:
    """Desk-scale dataset: ``queries_per_topic`` queries on the first topic of every category.

    Personalized topics are drawn among those query topics unless
    ``personalize_query_topics`` is false.
    """
    s_world, s_profile, s_obs = np.random.SeedSequence(seed).spawn(3)
    if world is None:
        world = gen_world(T, vocab_size, items_per_topic, np.random.default_rng(s_world), n_categories=n_categories,
                          category_share=category_share, sibling_bias=sibling_bias)
    qt = query_topic_set(world.T, n_categories)
    profile = gen_profile(world.T, k_personalized, eta_magnitude, tau, np.random.default_rng(s_profile),
                          candidates=qt if personalize_query_topics else None, profile_id=f"p{seed}")
    return make_observations(world, profile, qt, queries_per_topic, n, personalizer, lam, mu, s_obs)


def write_dataset(out_dir, data: Dataset) -> None:
    """Emit observations.jsonl, items.jsonl, topic_maps.jsonl, topics.json and ground_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_observations(out / "observations.jsonl", data.observations)
    write_items(out / "items.jsonl", data.world.texts)
    write_topic_maps(out / "topic_maps.jsonl", data.theta_by_item)
    write_topics(out / "topics.json", data.world.model)
    with open(out / "ground_truth.json", "w") as fh:
        json.dump(data.ground_truth(), fh, indent=2)
