"""Evaluation of a learned personalization vector.

* retrieval metrics of the topic ranking induced by ``eta`` against the
  true personalized topics (P@k, R-precision, P@+k, AP, PR curve),
* P-V disambiguation: which of two lists is the personalized one,
* user classification within a group of learned profiles,
* evidence extraction: promoted items explained by high-eta topics.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .perm_models import f_log_prob, g_log_prob
from .rankings import Permutation


@dataclass
class EvalReport:
    p_at: dict = field(default_factory=dict)
    p_plus: dict = field(default_factory=dict)
    r_precision: float = 0.0
    map_score: float = 0.0
    pr_curve: list = field(default_factory=list)
    disambiguation_accuracy: float | None = None
    classification_accuracy: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_at"] = {str(k): v for k, v in self.p_at.items()}
        d["p_plus"] = {str(k): v for k, v in self.p_plus.items()}
        return d


def rank_topics(eta_tilde) -> list:
    """Topic indices by decreasing eta, ties broken by index."""
    eta = np.asarray(eta_tilde, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("eta must be finite")
    return [int(k) for k in np.argsort(-eta, kind="stable")]


def precision_at(ranked: Sequence, relevant: set, k: int) -> float:
    k = min(k, len(ranked))
    return sum(1 for t in ranked[:k] if t in relevant) / k


def average_precision(ranked: Sequence, relevant: set) -> float:
    """Mean over relevant topics of the precision at the rank where each is hit."""
    hits, total = 0, 0.0
    for i, t in enumerate(ranked, start=1):
        if t in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def retrieval_metrics(ranked_topics: Sequence, T_act, ks=(1, 3, 5), plus_ks=(1, 3)) -> EvalReport:
    """Precision-style metrics of a topic ranking against the true personalized set.

    ``p_plus[k]`` is the precision at cutoff ``|T_act| + k``.

    >>> r = retrieval_metrics(["A", "C", "B"], {"A", "B"})
    >>> r.r_precision, round(r.map_score, 4)
    (0.5, 0.8333)
    """
    relevant = set(T_act)
    if not relevant:
        raise ValueError("T_act must be nonempty")
    ranked = list(ranked_topics)
    n_rel = len(relevant)
    return EvalReport(
        p_at={k: precision_at(ranked, relevant, k) for k in ks},
        p_plus={k: precision_at(ranked, relevant, n_rel + k) for k in plus_ks},
        r_precision=precision_at(ranked, relevant, n_rel),
        map_score=average_precision(ranked, relevant),
        pr_curve=[
            (precision_at(ranked, relevant, k), sum(1 for t in ranked[:k] if t in relevant) / n_rel)
            for k in range(1, len(ranked) + 1)
        ],
    )


def mean_report(reports: Sequence[EvalReport]) -> EvalReport:
    """Average of per-profile reports; ``map_score`` becomes MAP."""
    reports = list(reports)

    def avg(get):
        vals = [get(r) for r in reports]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    first = reports[0]
    curve_len = min(len(r.pr_curve) for r in reports)
    return EvalReport(
        p_at={k: avg(lambda r, k=k: r.p_at[k]) for k in first.p_at},
        p_plus={k: avg(lambda r, k=k: r.p_plus[k]) for k in first.p_plus},
        r_precision=avg(lambda r: r.r_precision),
        map_score=avg(lambda r: r.map_score),
        pr_curve=[tuple(np.mean([r.pr_curve[i] for r in reports], axis=0).tolist()) for i in range(curve_len)],
        disambiguation_accuracy=avg(lambda r: r.disambiguation_accuracy),
        classification_accuracy=avg(lambda r: r.classification_accuracy),
    )


def _log_lik(pi, sigma, eta, theta_by_item, lam, mixture):
    lg = g_log_prob(pi, sigma, eta, theta_by_item, lam)
    if mixture is None:
        return lg
    tau, mu = mixture
    return float(np.logaddexp(np.log(tau) + lg, np.log1p(-tau) + f_log_prob(pi, sigma, mu)))


def disambiguate(l1: Permutation, l2: Permutation, eta, theta_by_item, lam: float, mixture=None) -> str:
    """Return ``"l1"`` or ``"l2"``: the list judged to be the personalized one.

    ``l1`` is declared personalized when p(l1 | l2, eta) > p(l2 | l1, eta);
    ties go to ``"l2"`` (l1 treated as vanilla).  With ``mixture=(tau, mu)``
    the likelihood is ``tau g + (1 - tau) f`` instead of ``g`` alone.
    """
    a = _log_lik(l1, l2, eta, theta_by_item, lam, mixture)
    b = _log_lik(l2, l1, eta, theta_by_item, lam, mixture)
    return "l1" if a > b else "l2"


def disambiguation_accuracy(observations, eta, theta_by_item, lam: float, rng=None, mixture=None) -> float:
    """Fraction of pairs whose personalized list is identified, each pair shown in random order."""
    rng = np.random.default_rng(rng)
    observations = list(observations)
    if not observations:
        return float("nan")
    correct = 0
    for obs in observations:
        if rng.uniform() < 0.5:
            correct += disambiguate(obs.pi, obs.sigma, eta, theta_by_item, lam, mixture) == "l1"
        else:
            correct += disambiguate(obs.sigma, obs.pi, eta, theta_by_item, lam, mixture) == "l2"
    return correct / len(observations)


def classify_user(obs, profiles: Mapping[str, Sequence[float]], theta_by_item, lam: float) -> str:
    """User whose eta gives the observed re-ranking the highest g-likelihood; ties by sorted user id."""
    if len(profiles) < 2:
        raise ValueError("need at least two profiles")
    best, best_ll = None, -np.inf
    for user in sorted(profiles):
        ll = g_log_prob(obs.pi, obs.sigma, profiles[user], theta_by_item, lam)
        if ll > best_ll:
            best, best_ll = user, ll
    return best


@dataclass
class Evidence:
    query_id: str
    item_id: str
    rank_before: int
    rank_after: int
    dominant_topic: int
    score: float


def extract_evidence(observations, eta_tilde, theta_by_item, top_j: int = 10) -> list:
    """Promoted items ranked by (rank gain) x (eta . theta).

    The dominant topic of an item is the one contributing most to its score.
    """
    eta = np.asarray(eta_tilde, dtype=float)
    found = []
    for obs in observations:
        if not obs.is_reranked:
            continue
        for d in obs.pi:
            before, after = obs.sigma.rank(d), obs.pi.rank(d)
            if after >= before:
                continue
            theta = np.asarray(theta_by_item[d], dtype=float)
            contrib = eta * theta
            found.append(Evidence(obs.query_id, d, before, after, int(np.argmax(contrib)),
                                  float((before - after) * (eta @ theta))))
    found.sort(key=lambda e: -e.score)
    return found[:top_j]


def write_report(out_dir, report: EvalReport, evidence: Sequence[Evidence] = (), extra: dict | None = None) -> None:
    """Write ``report.json`` and ``report.md``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["evidence"] = [asdict(e) for e in evidence]
    if extra:
        payload.update(extra)
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    (out / "report.md").write_text(report_markdown(report, evidence))


def report_markdown(report: EvalReport, evidence: Sequence[Evidence] = ()) -> str:
    cols = [f"P@{k}" for k in report.p_at] + ["R-pre"] + [f"P@+{k}" for k in report.p_plus] + ["MAP"]
    vals = list(report.p_at.values()) + [report.r_precision] + list(report.p_plus.values()) + [report.map_score]
    lines = ["# Personalized-topic recovery", "", "| " + " | ".join(cols) + " |",
             "|" + "---|" * len(cols), "| " + " | ".join(f"{100 * v:.2f}" for v in vals) + " |", ""]
    if report.disambiguation_accuracy is not None:
        lines += [f"Disambiguation accuracy: {report.disambiguation_accuracy:.3f}", ""]
    if report.classification_accuracy is not None:
        lines += [f"User classification accuracy: {report.classification_accuracy:.3f}", ""]
    if evidence:
        lines += ["## Evidence", "", "| query | item | rank vanilla | rank personalized | topic | score |",
                  "|---|---|---|---|---|---|"]
        lines += [f"| {e.query_id} | {e.item_id} | {e.rank_before} | {e.rank_after} | T{e.dominant_topic} | {e.score:.3f} |"
                  for e in evidence]
        lines.append("")
    return "\n".join(lines)
