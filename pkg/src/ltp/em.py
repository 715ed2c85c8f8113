"""Variational EM over the permutation-model parameters (LTP-EM).

The E-step is :func:`ltp.inference.run_ltp_inf`, warm-started from the
previous variational state.  In the M-step the expected log-joint splits
into a ``mu`` part, ``sum_i (1 - phi_i) ln f_i(mu)``, and a ``lambda`` part,
``sum_i phi_i E[ln g_i](lambda)`` (zeta refreshed at every trial point), each
solved by a bounded 1-D search.  The previous value is always among the
candidates, so the objective never decreases.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import minimize_scalar

from .inference import _as_batch, compute_elbo, init_state, run_ltp_inf
from .perm_models import MU_MAX, ModelParams, PairBatch

log = logging.getLogger(__name__)

MU_MIN = 1e-3
FLAT = 1e-9


def mu_objective(batch: PairBatch, phi, mu: float) -> float:
    return float((1.0 - np.asarray(phi)) @ batch.f_log_prob(mu))


def lambda_objective(batch: PairBatch, phi, eta_tilde, lam: float, gamma: float) -> float:
    return float(np.asarray(phi) @ batch.bound(eta_tilde, lam, gamma))


def _argmax_1d(fun, lo, hi, extra=(), grid=0):
    """Bounded Brent search plus explicit candidates; returns the best point found."""
    res = minimize_scalar(lambda x: -fun(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    cands = [res.x, lo, hi, *extra]
    if grid:
        cands.extend(np.linspace(lo, hi, grid))
    vals = [fun(x) for x in cands]
    return float(cands[int(np.argmax(vals))])


def m_step(observations, state, theta_by_item=None, params: ModelParams | None = None,
           lam_bounds=(0.0, 1.0), mu_bounds=(MU_MIN, MU_MAX)) -> tuple:
    """New ``(lambda, mu)`` maximising the expected log-joint for a fixed variational state.

    ``params`` supplies gamma and the previous values, which are kept when
    the corresponding objective is flat (all phi at 0 for lambda, all at 1
    for mu).
    """
    params = params or ModelParams()
    batch = _as_batch(observations, theta_by_item)
    phi = np.asarray(state.phi, dtype=float)

    if np.sum(1.0 - phi) <= FLAT:
        mu = params.mu
    else:
        mu = _argmax_1d(lambda m: mu_objective(batch, phi, m), *mu_bounds, extra=(params.mu,))

    if np.sum(phi) <= FLAT:
        lam = params.lam
    else:
        lam = _argmax_1d(lambda x: lambda_objective(batch, phi, state.eta_tilde, x, params.gamma),
                         *lam_bounds, extra=(params.lam,), grid=21)
    return lam, mu


def run_ltp_em(observations, theta_by_item=None, tol: float = 1e-3, max_iters: int = 50, seed=0,
               gamma: float = 1.0, delta: float = 2.0, init: tuple | None = None,
               inf_tol: float = 1e-6, inf_max_iters: int = 500):
    """Alternate LTP-INF and the M-step until (lambda, mu) move less than ``tol``.

    ``init`` optionally fixes ``(lambda0, mu0)``; otherwise lambda0 ~ U(0, 1)
    and mu0 ~ U(1, 20) from ``seed``.

    Returns ``(params, state)``; ``state.em_trace`` holds one record per
    iteration with the ELBO after the E-step and after the M-step.
    """
    rng = np.random.default_rng(seed)
    lam0, mu0 = init if init is not None else (rng.uniform(0.0, 1.0), rng.uniform(1.0, 20.0))
    params = ModelParams(mu=float(mu0), lam=float(lam0), gamma=gamma, delta=delta)
    batch = _as_batch(observations, theta_by_item)
    state = init_state(batch.m, batch.T, rng, delta)
    trace = []
    for it in range(1, max_iters + 1):
        state = run_ltp_inf(batch, params, tol=inf_tol, max_iters=inf_max_iters, state=state)
        e_elbo = state.elbo
        lam, mu = m_step(batch, state, params=params)
        new = ModelParams(mu=mu, lam=lam, gamma=gamma, delta=delta)
        state.zeta = batch.optimal_zeta(state.eta_tilde, new.lam, new.gamma)
        state.elbo = compute_elbo(batch, state, new)
        trace.append({"iter": it, "lambda": new.lam, "mu": new.mu, "elbo": e_elbo, "elbo_after_m": state.elbo})
        done = abs(new.lam - params.lam) < tol and abs(new.mu - params.mu) < tol
        params = new
        if done:
            break
    else:
        log.warning("LTP-EM stopped at max_iters=%d without converging", max_iters)
    if params.mu < 1.0:
        log.info("estimated mu=%.4g is below 1", params.mu)
    state.em_trace = trace
    return params, state
