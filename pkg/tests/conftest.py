"""Shared oracles and fixtures.

The oracles here are deliberately naive re-statements of the stage-wise
models (plain Python loops over remaining items) so that library code is
checked against an independent route.
"""

import itertools
import math

import numpy as np
import pytest

from ltp.rankings import Permutation, QueryObservation


def naive_stagewise_prob(pi, sigma, score, coef):
    """Product over stages of exp(score[d] + coef*(i - sigma^-1 d)) / sum over unplaced."""
    pos = {d: r for r, d in enumerate(sigma, start=1)}
    items = list(pi)
    p = 1.0
    for i in range(1, len(items) + 1):
        w = {d: math.exp(score.get(d, 0.0) + coef * (i - pos[d])) for d in items[i - 1:]}
        p *= w[items[i - 1]] / sum(w.values())
    return p


def naive_f(pi, sigma, mu):
    return naive_stagewise_prob(pi, sigma, {}, mu)


def naive_g(pi, sigma, eta, theta, lam):
    score = {d: lam * float(np.dot(eta, theta[d])) for d in sigma}
    return naive_stagewise_prob(pi, sigma, score, 1.0 - lam)


def all_perms(items):
    return [Permutation(p) for p in itertools.permutations(items)]


def random_theta(items, T, rng, sparse=False):
    out = {}
    for d in items:
        if sparse:
            t = np.zeros(T)
            t[rng.choice(T, size=rng.integers(1, 3), replace=False)] = 1.0
            out[d] = t / t.sum()
        else:
            out[d] = rng.dirichlet(np.ones(T))
    return out


def make_obs(sigma, pi, qid="q"):
    return QueryObservation(qid, Permutation(sigma), Permutation(pi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
