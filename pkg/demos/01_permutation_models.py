"""
Stage-wise permutation models
=============================

Two distributions over re-rankings of a vanilla list sigma.  f only cares
about distance from sigma; g also pulls items with a high score eta . theta
towards the top.
"""

import itertools
import math

import numpy as np

from ltp.perm_models import f_log_prob, g_log_prob, sample_f, stage_probabilities
from ltp.rankings import Permutation

# A three-item example.  sigma ranks item 2 first; pi puts item 3 first.
sigma = Permutation([2, 3, 1])
pi = Permutation([3, 1, 2])
print("f(pi | sigma, mu=1) =", round(math.exp(f_log_prob(pi, sigma, 1.0)), 4))
print("per-stage choice probabilities:", np.round(stage_probabilities(pi, sigma, 1.0), 4))

# f sums to one over all 3! orderings and is largest at sigma itself
probs = {p: math.exp(f_log_prob(Permutation(p), sigma, 1.0)) for p in itertools.permutations([1, 2, 3])}
print("sum over S_3:", sum(probs.values()))
print("mode:", max(probs, key=probs.get))

# As mu grows the mass piles up on sigma; as it shrinks f flattens out.
rng = np.random.default_rng(0)
for mu in (0.1, 1.0, 5.0):
    draws = sample_f(sigma, mu, rng, size=5000)
    print(f"mu={mu:>4}: share of draws equal to sigma = {np.mean([d == sigma for d in draws]):.3f}")

# g with lambda = 1 is a plain score-ordered choice model: a strong score on
# item 1 makes it jump to the top regardless of where sigma put it.
theta = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]), 3: np.array([0.0, 1.0])}
eta = np.array([3.0, 0.0])
for lam in (0.0, 0.5, 1.0):
    p = math.exp(g_log_prob(Permutation([1, 2, 3]), sigma, eta, theta, lam))
    print(f"lambda={lam}: g((1,2,3) | sigma) = {p:.3f}")
