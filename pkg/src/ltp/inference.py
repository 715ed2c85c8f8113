"""Mean-field variational inference for the personalization vector (LTP-INF).

The variational family is

* ``q(z_i = 1) = phi_i``: query ``i`` was re-ranked by topical personalization (g),
* ``q(tau) = Beta(kappa1, kappa2)`` with ``kappa1`` paired with ``z = 1``,
* ``q(eta) = N(eta_tilde, gamma^2 I)`` with fixed covariance,

and ``E[ln g]`` is replaced by its tangent lower bound with per-stage
``zeta``.  Block coordinate ascent updates kappa, then phi (after a
closed-form zeta refresh), then eta_tilde by nonlinear conjugate gradient.
Each block is an exact or ascent step on the same objective, so the ELBO
never decreases.

ELBO constants that are dropped: ``-ln B(delta, delta)`` from the Beta prior,
``-T/2 ln(2 pi gamma^2) - T/2`` from the Gaussian prior and the Gaussian
entropy ``T/2 ln(2 pi e gamma^2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln, xlogy

from .perm_models import ModelParams, PairBatch, expected_log_g_bound, f_log_prob

log = logging.getLogger(__name__)

PHI_EPS = 1e-12


@dataclass
class VariationalState:
    phi: np.ndarray
    kappa1: float
    kappa2: float
    eta_tilde: np.ndarray
    zeta: np.ndarray | None = None  # (m, n_max) per-stage, padded stages hold 1
    elbo: float = float("nan")
    elbo_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    em_trace: list = field(default_factory=list)

    @property
    def tau_mean(self) -> float:
        return self.kappa1 / (self.kappa1 + self.kappa2)

    def copy(self) -> "VariationalState":
        return VariationalState(
            self.phi.copy(), self.kappa1, self.kappa2, self.eta_tilde.copy(),
            None if self.zeta is None else self.zeta.copy(),
            self.elbo, list(self.elbo_trace), self.iterations, self.converged,
        )


class InferenceError(FloatingPointError):
    pass


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _as_batch(observations, theta_by_item) -> PairBatch:
    if isinstance(observations, PairBatch):
        return observations
    return PairBatch(observations, theta_by_item)


def init_state(m: int, T: int, rng=None, delta: float = 2.0) -> VariationalState:
    """Random starting point: phi ~ U(0, 1), kappa1 = kappa2 = delta + m/2, eta_tilde ~ N(0, 0.01^2)."""
    rng = _rng(rng)
    phi = np.clip(rng.uniform(size=m), PHI_EPS, 1 - PHI_EPS)
    eta = rng.normal(scale=0.01, size=T)
    return VariationalState(phi, delta + m / 2, delta + m / 2, eta)


def update_kappas(phi, delta: float, m: int | None = None) -> tuple:
    """Closed-form Beta update: kappa1 collects the z=1 mass, kappa2 the z=0 mass."""
    phi = np.asarray(phi, dtype=float)
    if m is not None and m != len(phi):
        raise ValueError(f"m={m} but {len(phi)} phi values")
    s = float(phi.sum())
    return delta + s, delta + (len(phi) - s)


def _phi_from_logits(log_f, bound, kappa1, kappa2):
    logit = digamma(kappa1) - digamma(kappa2) + bound - log_f
    return np.clip(expit(logit), PHI_EPS, 1 - PHI_EPS)


def update_phi(obs, state: VariationalState, params: ModelParams, theta_by_item) -> float:
    """phi_i = 1 / (1 + exp(Psi(kappa2) - Psi(kappa1) + ln f - E[ln g])) for one query."""
    log_f = f_log_prob(obs.pi, obs.sigma, params.mu)
    bound = expected_log_g_bound(obs.pi, obs.sigma, state.eta_tilde, theta_by_item, params.lam, params.gamma)
    return float(_phi_from_logits(log_f, bound, state.kappa1, state.kappa2))


def eta_objective(batch: PairBatch, eta_tilde, phi, params: ModelParams):
    """L(eta_tilde) = -|eta_tilde|^2 / (2 gamma^2) + sum_i phi_i E[ln g_i] and its gradient (optimal zeta)."""
    value, grad = batch.bound_and_grad(eta_tilde, params.lam, params.gamma, np.asarray(phi))
    g2 = params.gamma**2
    return value - eta_tilde @ eta_tilde / (2 * g2), grad - eta_tilde / g2


def maximize_eta(observations, state: VariationalState, params: ModelParams, theta_by_item=None,
                 gtol: float = 1e-7, maxiter: int = 1000) -> np.ndarray:
    """Maximise the concave objective in eta_tilde by nonlinear conjugate gradient.

    Zeta is kept at its optimum inside the objective, which equals
    alternating closed-form zeta refreshes with eta steps to convergence.
    Starts from ``state.eta_tilde`` and never returns a worse point.
    """
    batch = _as_batch(observations, theta_by_item)
    phi = np.asarray(state.phi, dtype=float)
    if batch.m == 0 or params.lam == 0.0 or phi.sum() <= 1e-300:
        # data term is constant in eta_tilde; the prior alone puts it at zero
        return np.zeros(batch.T)

    def neg(x):
        v, g = eta_objective(batch, x, phi, params)
        return -v, -g

    x0 = np.asarray(state.eta_tilde, dtype=float)
    f0 = neg(x0)[0]
    res = minimize(neg, x0, jac=True, method="CG", options={"gtol": gtol, "maxiter": maxiter})
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
        raise InferenceError(f"eta maximisation diverged: {res.message}")
    return res.x if res.fun <= f0 else x0


def elbo_terms(observations, state: VariationalState, params: ModelParams, theta_by_item=None) -> dict:
    """Every ELBO term separately.  Uses ``state.zeta`` when set, else the optimal zeta."""
    batch = _as_batch(observations, theta_by_item)
    phi, k1, k2, d = state.phi, state.kappa1, state.kappa2, params.delta
    psi1, psi2, psi12 = digamma(k1), digamma(k2), digamma(k1 + k2)
    log_f = batch.f_log_prob(params.mu)
    bound = batch.bound(state.eta_tilde, params.lam, params.gamma, state.zeta)
    terms = {
        "z_prior": float(np.sum(phi * (psi1 - psi12) + (1 - phi) * (psi2 - psi12))),
        "tau_prior": (d - 1) * (psi1 + psi2 - 2 * psi12),
        "eta_prior": -float(state.eta_tilde @ state.eta_tilde) / (2 * params.gamma**2),
        "data_g": float(phi @ bound),
        "data_f": float((1 - phi) @ log_f),
        "z_entropy": -float(np.sum(xlogy(phi, phi) + xlogy(1 - phi, 1 - phi))),
        "tau_entropy": float(gammaln(k1) + gammaln(k2) - gammaln(k1 + k2)
                             - (k1 - 1) * psi1 - (k2 - 1) * psi2 + (k1 + k2 - 2) * psi12),
    }
    for name, v in terms.items():
        if not np.isfinite(v):
            raise InferenceError(f"non-finite ELBO term {name!r}: {v}")
    return terms


def compute_elbo(observations, state: VariationalState, params: ModelParams, theta_by_item=None) -> float:
    return float(sum(elbo_terms(observations, state, params, theta_by_item).values()))


def run_ltp_inf(observations, params: ModelParams, theta_by_item=None, tol: float = 1e-6,
                max_iters: int = 500, seed=0, state: VariationalState | None = None,
                block_trace: list | None = None) -> VariationalState:
    """Coordinate ascent on the ELBO with fixed (lambda, mu).

    Per sweep: kappa update, zeta refresh + phi update, eta_tilde
    maximisation, ELBO evaluation.  Converged when the relative ELBO change
    drops below ``tol``.  Pass ``state`` to warm-start; it is not modified.
    If ``block_trace`` is a list, the ELBO after every block update is
    appended to it as ``(sweep, block, elbo)``.
    """
    batch = _as_batch(observations, theta_by_item)
    if batch.m == 0:
        st = VariationalState(np.zeros(0), params.delta, params.delta, np.zeros(batch.T), np.zeros((0, 0)))
        st.elbo = compute_elbo(batch, st, params)
        st.elbo_trace, st.converged = [st.elbo], True
        return st

    st = init_state(batch.m, batch.T, seed, params.delta) if state is None else state.copy()
    st.zeta = batch.optimal_zeta(st.eta_tilde, params.lam, params.gamma)
    st.elbo = compute_elbo(batch, st, params)
    st.elbo_trace = [st.elbo]
    st.converged = False
    log_f = batch.f_log_prob(params.mu)

    def record(sweep, block):
        if block_trace is not None:
            block_trace.append((sweep, block, compute_elbo(batch, st, params)))

    for sweep in range(1, max_iters + 1):
        st.kappa1, st.kappa2 = update_kappas(st.phi, params.delta)
        record(sweep, "kappa")
        bound = batch.bound(st.eta_tilde, params.lam, params.gamma, st.zeta)
        st.phi = _phi_from_logits(log_f, bound, st.kappa1, st.kappa2)
        record(sweep, "phi")
        st.eta_tilde = maximize_eta(batch, st, params)
        st.zeta = batch.optimal_zeta(st.eta_tilde, params.lam, params.gamma)
        record(sweep, "eta")
        prev, st.elbo = st.elbo, compute_elbo(batch, st, params)
        st.elbo_trace.append(st.elbo)
        st.iterations = sweep
        if abs(st.elbo - prev) <= tol * abs(prev):
            st.converged = True
            break
    else:
        log.warning("LTP-INF stopped at max_iters=%d without converging", max_iters)
    return st


def profile_dict(state: VariationalState, params: ModelParams, query_ids) -> dict:
    """The ``profile.json`` payload."""
    return {
        "eta_tilde": [float(x) for x in state.eta_tilde],
        "kappa1": float(state.kappa1),
        "kappa2": float(state.kappa2),
        "tau_mean": float(state.tau_mean),
        "lambda": float(params.lam),
        "mu": float(params.mu),
        "gamma": float(params.gamma),
        "delta": float(params.delta),
        "elbo_trace": [float(x) for x in state.elbo_trace],
        "phi": {q: float(p) for q, p in zip(query_ids, state.phi)},
    }
