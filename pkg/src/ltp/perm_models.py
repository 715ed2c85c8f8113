"""Stage-wise permutation distributions centred at a vanilla ranking.

``f`` is the distance-only model with spread ``mu``: at stage ``i`` the item
``pi(j)`` still unplaced is chosen with weight ``exp(mu * (i - sigma^-1 pi(j)))``.
``g`` mixes item scores ``eta . theta_d`` (weight ``lam``) with the same
distance term (weight ``1 - lam``).

Besides exact log-probabilities and samplers this module carries the
variational lower bound on ``E[ln g]`` under ``eta ~ N(eta_tilde, gamma^2 I)``
and its gradient, both for a single pair and in a padded batch form
(:class:`PairBatch`) used by the inference code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .rankings import Permutation, QueryObservation

MU_MAX = 50.0


@dataclass
class ModelParams:
    """Permutation-model parameters and the two fixed prior scales."""

    mu: float = 10.0
    lam: float = 0.9
    gamma: float = 1.0
    delta: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.mu <= MU_MAX:
            raise ValueError(f"mu must lie in (0, {MU_MAX}], got {self.mu}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gamma <= 0 or self.delta <= 0:
            raise ValueError("gamma and delta must be positive")


def _check_pair(pi: Permutation, sigma: Permutation) -> np.ndarray:
    if pi.item_set != sigma.item_set:
        raise ValueError("pi and sigma are over different item sets")
    return pi.ranks_in(sigma).astype(float)


def _theta_rows(items: Sequence[str], theta_by_item: Mapping[str, np.ndarray]) -> np.ndarray:
    try:
        return np.array([theta_by_item[d] for d in items], dtype=float)
    except KeyError as exc:
        raise KeyError(f"no topic-map for item {exc.args[0]!r}") from None


def _stage_logits(base: np.ndarray, r: np.ndarray, coef: float) -> np.ndarray:
    """logits[i, j] = base[j] + coef * (i - r[j]) for stages i (1-based), -inf for j < i."""
    n = len(r)
    i = np.arange(1, n + 1)[:, None]
    logits = base[None, :] + coef * (i - r[None, :])
    return np.where(np.triu(np.ones((n, n), dtype=bool)), logits, -np.inf)


def _stagewise_log_prob(base: np.ndarray, r: np.ndarray, coef: float) -> float:
    if len(r) == 0:
        return 0.0
    logits = _stage_logits(base, r, coef)
    return float(np.sum(np.diag(logits) - logsumexp(logits, axis=1)))


def stage_probabilities(pi: Permutation, sigma: Permutation, mu: float) -> np.ndarray:
    """Probability of the actual choice at every stage of ``f``."""
    r = _check_pair(pi, sigma)
    logits = _stage_logits(np.zeros(len(r)), r, mu)
    return np.exp(np.diag(logits) - logsumexp(logits, axis=1))


def f_log_prob(pi: Permutation, sigma: Permutation, mu: float) -> float:
    """Log-probability of ``pi`` under the distance model centred at ``sigma``."""
    r = _check_pair(pi, sigma)
    return _stagewise_log_prob(np.zeros(len(r)), r, mu)


def g_log_prob(pi: Permutation, sigma: Permutation, eta, theta_by_item, lam: float) -> float:
    """Log-probability of ``pi`` under the score-plus-distance model."""
    r = _check_pair(pi, sigma)
    scores = _theta_rows(pi.items, theta_by_item) @ np.asarray(eta, dtype=float) if len(r) else np.zeros(0)
    return _stagewise_log_prob(lam * scores, r, 1.0 - lam)


def _sample_stagewise(sigma: Permutation, base: np.ndarray, coef: float, rng, size):
    """Draw permutations stage by stage with Gumbel-max.

    ``base`` is indexed by sigma position.
    """
    n = len(sigma)
    draws = 1 if size is None else int(size)
    r = np.arange(1, n + 1, dtype=float)
    out = np.empty((draws, n), dtype=np.int64)
    taken = np.zeros((draws, n), dtype=bool)
    for k in range(1, n + 1):
        logits = base + coef * (k - r)
        logits = np.where(taken, -np.inf, logits[None, :])
        choice = np.argmax(logits + rng.gumbel(size=(draws, n)), axis=1)
        out[:, k - 1] = choice
        taken[np.arange(draws), choice] = True
    perms = [Permutation(sigma.items[j] for j in row) for row in out]
    return perms[0] if size is None else perms


def sample_f(sigma: Permutation, mu: float, rng, size=None):
    """Sample from ``f(. | sigma, mu)``; a list of ``size`` draws if ``size`` is given."""
    return _sample_stagewise(sigma, np.zeros(len(sigma)), mu, rng, size)


def sample_g(sigma: Permutation, eta, theta_by_item, lam: float, rng, size=None):
    scores = _theta_rows(sigma.items, theta_by_item) @ np.asarray(eta, dtype=float)
    return _sample_stagewise(sigma, lam * scores, 1.0 - lam, rng, size)


def _bound_terms(pi, sigma, eta_tilde, theta_by_item, lam, gamma):
    """Numerators and per-stage exponent matrix of the bound."""
    r = _check_pair(pi, sigma)
    th = _theta_rows(pi.items, theta_by_item)
    s = th @ np.asarray(eta_tilde, dtype=float)
    n = len(r)
    num = lam * s + (1.0 - lam) * (np.arange(1, n + 1) - r)
    var_term = 0.5 * lam**2 * gamma**2 * np.sum(th**2, axis=1)
    a = _stage_logits(lam * s + var_term, r, 1.0 - lam)
    return th, num, a


def optimal_zeta(pi, sigma, eta_tilde, theta_by_item, lam, gamma) -> np.ndarray:
    """Per-stage zeta at which the bound is tight: the sum of stage expectations."""
    _, _, a = _bound_terms(pi, sigma, eta_tilde, theta_by_item, lam, gamma)
    return np.exp(logsumexp(a, axis=1))


def expected_log_g_bound(pi, sigma, eta_tilde, theta_by_item, lam, gamma, zeta=None) -> float:
    """Lower bound on ``E[ln g(pi | eta)]`` for ``eta ~ N(eta_tilde, gamma^2 I)``.

    Every stage normaliser ``ln sum_j exp(.)`` is replaced by its tangent
    bound at ``zeta_i`` and the Gaussian expectation of each exponential is
    taken in closed form.  ``zeta=None`` uses the optimal zeta.
    """
    _, num, a = _bound_terms(pi, sigma, eta_tilde, theta_by_item, lam, gamma)
    if zeta is None:
        return float(np.sum(num - logsumexp(a, axis=1)))
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != num.shape:
        raise ValueError(f"zeta must have one entry per stage ({len(num)})")
    if np.any(zeta <= 0):
        raise ValueError("zeta must be positive")
    return float(np.sum(num - np.exp(a).sum(axis=1) / zeta - np.log(zeta) + 1.0))


def grad_eta_bound(pi, sigma, eta_tilde, theta_by_item, lam, gamma, zeta=None) -> np.ndarray:
    """Gradient of :func:`expected_log_g_bound` with respect to ``eta_tilde``."""
    th, _, a = _bound_terms(pi, sigma, eta_tilde, theta_by_item, lam, gamma)
    if zeta is None:
        w = np.exp(a - logsumexp(a, axis=1, keepdims=True))
    else:
        w = np.exp(a) / np.asarray(zeta, dtype=float)[:, None]
    return lam * (th.sum(axis=0) - w.sum(axis=0) @ th)


class PairBatch:
    """Padded array view of many aligned pairs for vectorized evaluation.

    Lists shorter than the longest are padded with phantom items whose
    topic-map is zero and whose sigma-rank equals their position, so padded
    stages contribute exactly zero to every quantity below.
    """

    def __init__(self, observations: Sequence[QueryObservation], theta_by_item: Mapping[str, np.ndarray], T=None):
        self.query_ids = [o.query_id for o in observations]
        m = len(observations)
        N = max((o.n for o in observations), default=0)
        if T is None:
            T = len(next(iter(theta_by_item.values()))) if theta_by_item else 0
        self.m, self.N, self.T = m, N, T
        self.lengths = np.array([o.n for o in observations], dtype=np.int64)
        r = np.tile(np.arange(1, N + 1, dtype=float), (m, 1))
        theta = np.zeros((m, N, T))
        for q, o in enumerate(observations):
            r[q, : o.n] = o.pi.ranks_in(o.sigma)
            theta[q, : o.n] = _theta_rows(o.pi.items, theta_by_item)
        self.r, self.theta = r, theta
        self.sq_norm = np.sum(theta**2, axis=2)
        i = np.arange(N)
        upper = i[None, :, None] <= i[None, None, :]
        real = i[None, None, :] < self.lengths[:, None, None]
        self.valid = (upper & real) | (i[:, None] == i[None, :])[None]
        self.dist = (i + 1)[None, :, None] - r[:, None, :]  # (m, i, j): i - sigma^-1 pi(j)
        self.diag_dist = (i + 1)[None, :] - r

    def __len__(self):
        return self.m

    def subset(self, idx) -> "PairBatch":
        b = object.__new__(PairBatch)
        b.query_ids = [self.query_ids[k] for k in np.atleast_1d(idx)]
        for name in ("lengths", "r", "theta", "sq_norm", "valid", "dist", "diag_dist"):
            setattr(b, name, getattr(self, name)[idx])
        b.m, b.N, b.T = len(b.lengths), self.N, self.T
        return b

    def _logits(self, base, coef):
        a = base[:, None, :] + coef * self.dist
        return np.where(self.valid, a, -np.inf)

    def f_log_prob(self, mu: float) -> np.ndarray:
        a = self._logits(np.zeros((self.m, self.N)), mu)
        return np.sum(mu * self.diag_dist - logsumexp(a, axis=2), axis=1)

    def scores(self, eta) -> np.ndarray:
        return self.theta @ np.asarray(eta, dtype=float)

    def g_log_prob(self, eta, lam: float) -> np.ndarray:
        s = lam * self.scores(eta)
        a = self._logits(s, 1.0 - lam)
        return np.sum(s + (1.0 - lam) * self.diag_dist - logsumexp(a, axis=2), axis=1)

    def _bound_logits(self, eta_tilde, lam, gamma):
        s = self.scores(eta_tilde)
        num = lam * s + (1.0 - lam) * self.diag_dist
        a = self._logits(lam * s + 0.5 * lam**2 * gamma**2 * self.sq_norm, 1.0 - lam)
        return num, a

    def optimal_zeta(self, eta_tilde, lam, gamma) -> np.ndarray:
        _, a = self._bound_logits(eta_tilde, lam, gamma)
        return np.exp(logsumexp(a, axis=2))

    def bound(self, eta_tilde, lam, gamma, zeta=None) -> np.ndarray:
        """Per-query lower bound on E[ln g]; optimal zeta when ``zeta`` is None."""
        num, a = self._bound_logits(eta_tilde, lam, gamma)
        if zeta is None:
            return np.sum(num - logsumexp(a, axis=2), axis=1)
        return np.sum(num - np.exp(a).sum(axis=2) / zeta - np.log(zeta) + 1.0, axis=1)

    def bound_and_grad(self, eta_tilde, lam, gamma, weights):
        """Weighted sum of optimal-zeta bounds and its gradient in eta_tilde."""
        num, a = self._bound_logits(eta_tilde, lam, gamma)
        lse = logsumexp(a, axis=2)
        value = float(weights @ np.sum(num - lse, axis=1))
        p = np.exp(a - lse[:, :, None])  # stage softmax, rows sum to 1
        pull = self.theta.sum(axis=1) - np.einsum("qj,qjt->qt", p.sum(axis=1), self.theta)
        return value, lam * (weights @ pull)
