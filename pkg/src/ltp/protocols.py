"""Train/test protocols for the classification tests.

Observations are split at random into a training part (default 80%) used to
learn ``eta`` and a test part; the split is repeated over several seeds.
Only re-ranked test pairs are scored, since identical lists carry no label.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .em import run_ltp_em
from .evaluation import classify_user, disambiguation_accuracy
from .inference import run_ltp_inf
from .perm_models import ModelParams


def split_observations(observations: Sequence, frac: float = 0.8, seed=0) -> tuple:
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(observations))
    cut = int(round(frac * len(observations)))
    return [observations[i] for i in sorted(idx[:cut])], [observations[i] for i in sorted(idx[cut:])]


def learn_profile(observations, theta_by_item, params: ModelParams, em: bool = False, seed=0, **kw):
    """(params, state) from LTP-EM, or from LTP-INF with ``params`` held fixed."""
    if em:
        return run_ltp_em(observations, theta_by_item, seed=seed, gamma=params.gamma, delta=params.delta, **kw)
    return params, run_ltp_inf(observations, params, theta_by_item, seed=seed, **kw)


def disambiguation_trial(observations, theta_by_item, params: ModelParams, frac: float = 0.8, seed=0,
                         em: bool = False, mixture: bool = False) -> float:
    """Disambiguation accuracy on the re-ranked part of one random test split."""
    train, test = split_observations(observations, frac, seed)
    fitted, state = learn_profile(train, theta_by_item, params, em, seed)
    test = [o for o in test if o.is_reranked]
    mix = (state.tau_mean, fitted.mu) if mixture else None
    return disambiguation_accuracy(test, state.eta_tilde, theta_by_item, fitted.lam, rng=seed, mixture=mix)


def classification_trial(user_observations: Mapping[str, Sequence], theta_by_item, params: ModelParams,
                         frac: float = 0.8, seed=0, em: bool = False) -> float:
    """User-classification accuracy within one group for one random split."""
    etas, lams, tests = {}, {}, []
    for user in sorted(user_observations):
        train, test = split_observations(user_observations[user], frac, seed)
        fitted, state = learn_profile(train, theta_by_item, params, em, seed)
        etas[user], lams[user] = state.eta_tilde, fitted.lam
        tests += [(user, o) for o in test if o.is_reranked]
    if not tests:
        return float("nan")
    lam = float(np.mean(list(lams.values())))
    hits = sum(classify_user(o, etas, theta_by_item, lam) == user for user, o in tests)
    return hits / len(tests)
