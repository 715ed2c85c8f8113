"""Command-line entry point: ``ltp <command> [options]``.

Commands: fit-topics, simulate, learn, evaluate, disambiguate, classify, evidence.
On failure a one-line JSON error record is written to stderr and the exit
code names the failure (3 file not found, 4 schema violation, 5 topic-count
mismatch, 1 anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, protocols, simulator, topic_model
from .em import run_ltp_em
from .errors import SchemaError, TopicCountMismatch
from .inference import profile_dict, run_ltp_inf
from .perm_models import ModelParams
from .rankings import read_observations

EXIT_CODES = {"file_not_found": 3, "schema_violation": 4, "topic_count_mismatch": 5, "error": 1}


def _dump(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _params(args) -> ModelParams:
    return ModelParams(mu=args.mu, lam=args.lam, gamma=args.gamma, delta=args.delta)


def _load_inputs(args):
    theta = topic_model.import_topic_maps(args.topic_maps, args.topics)
    obs = read_observations(args.observations)
    missing = topic_model.missing_topic_maps(theta, obs)
    if missing:
        raise SchemaError(f"{len(missing)} items have no topic-map, e.g. {missing[:5]}")
    return obs, theta


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _repeat(fn, repeats: int, threads: int) -> list:
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(fn, range(repeats)))


def cmd_fit_topics(args) -> int:
    corpus = topic_model.read_items(args.items)
    fit = topic_model.fit_topics(corpus, args.topics or 10, max_iters=args.max_iters, seed=args.seed)
    out = Path(args.out)
    topic_model.write_topics(out / "topics.json", fit.model)
    topic_model.write_topic_maps(out / "topic_maps.jsonl", fit.theta)
    _dump(out / "fit.json", {"converged": fit.converged, "objective_trace": fit.objective_trace})
    return 0


def cmd_simulate(args) -> int:
    data = simulator.simulate(
        T=args.topics or 50, k_personalized=args.k, queries_per_topic=args.queries_per_topic, n=args.n,
        personalizer=args.personalizer, eta_magnitude=args.eta_magnitude, tau=args.tau,
        lam=args.lam, mu=args.mu, seed=args.seed,
    )
    simulator.write_dataset(args.out, data)
    return 0


def cmd_learn(args) -> int:
    obs, theta = _load_inputs(args)
    if args.em:
        params, state = run_ltp_em(obs, theta, tol=args.tol if args.tol is not None else 1e-3,
                                   max_iters=args.max_iters, seed=args.seed, gamma=args.gamma, delta=args.delta)
    else:
        params = _params(args)
        state = run_ltp_inf(obs, params, theta, tol=args.tol if args.tol is not None else 1e-6,
                            max_iters=args.max_iters, seed=args.seed)
    payload = profile_dict(state, params, [o.query_id for o in obs])
    if args.em:
        payload["em_trace"] = state.em_trace
    _dump(Path(args.out) / "profile.json", payload)
    return 0


def cmd_evaluate(args) -> int:
    profile = _read_json(args.profile)
    truth = _read_json(args.ground_truth)
    try:
        eta, act = profile["eta_tilde"], truth["personalized_topics"]
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None
    if "eta_true" in truth and len(truth["eta_true"]) != len(eta):
        raise TopicCountMismatch(f"profile has {len(eta)} topics, ground truth {len(truth['eta_true'])}")
    report = evaluation.retrieval_metrics(evaluation.rank_topics(eta), act)
    evaluation.write_report(args.out, report)
    return 0


def cmd_disambiguate(args) -> int:
    obs, theta = _load_inputs(args)
    params = _params(args)
    accs = _repeat(lambda r: protocols.disambiguation_trial(obs, theta, params, args.split, args.seed + r, args.em),
                   args.repeats, args.threads)
    _dump(Path(args.out) / "disambiguation.json",
          {"accuracy": accs, "mean": float(np.nanmean(accs)), "std": float(np.nanstd(accs)), "em": args.em})
    return 0


def cmd_classify(args) -> int:
    theta = topic_model.import_topic_maps(args.topic_maps, args.topics)
    users = {}
    for entry in args.user:
        name, sep, path = entry.partition("=")
        if not sep:
            raise SchemaError(f"--user expects NAME=PATH, got {entry!r}")
        users[name] = read_observations(path)
        missing = topic_model.missing_topic_maps(theta, users[name])
        if missing:
            raise SchemaError(f"user {name}: {len(missing)} items have no topic-map")
    params = _params(args)
    accs = _repeat(lambda r: protocols.classification_trial(users, theta, params, args.split, args.seed + r, args.em),
                   args.repeats, args.threads)
    _dump(Path(args.out) / "classification.json",
          {"accuracy": accs, "mean": float(np.nanmean(accs)), "chance": 1.0 / len(users), "em": args.em})
    return 0


def cmd_evidence(args) -> int:
    obs, theta = _load_inputs(args)
    profile = _read_json(args.profile)
    eta = np.asarray(profile["eta_tilde"], dtype=float)
    T = len(next(iter(theta.values())))
    if len(eta) != T:
        raise TopicCountMismatch(f"profile has {len(eta)} topics, topic-maps {T}")
    found = evaluation.extract_evidence(obs, eta, theta, args.top)
    out = Path(args.out)
    _dump(out / "evidence.json", [vars(e) for e in found])
    lines = ["| query | item | rank vanilla | rank personalized | topic | score |", "|---|---|---|---|---|---|"]
    lines += [f"| {e.query_id} | {e.item_id} | {e.rank_before} | {e.rank_after} | T{e.dominant_topic} | {e.score:.3f} |"
              for e in found]
    (out / "evidence.md").write_text("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--topics", type=int, default=None, help="number of topics T")
    common.add_argument("--gamma", type=float, default=1.0)
    common.add_argument("--delta", type=float, default=2.0)
    common.add_argument("--lambda", dest="lam", type=float, default=0.9)
    common.add_argument("--mu", type=float, default=10.0)
    common.add_argument("--em", action="store_true", help="estimate lambda and mu by variational EM")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--split", type=float, default=0.8)
    common.add_argument("--repeats", type=int, default=10)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ltp", description="Learn topic-level personalization from ranked-list pairs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit-topics", parents=[common], help="fit topics and item topic-maps")
    s.add_argument("--items", required=True)
    s.set_defaults(func=cmd_fit_topics, max_iters=100)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset with ground truth")
    s.add_argument("--k", type=int, default=3, help="number of personalized topics")
    s.add_argument("--queries-per-topic", type=int, default=50)
    s.add_argument("--n", type=int, default=10, help="results per query")
    s.add_argument("--personalizer", choices=["generative", "deterministic"], default="generative")
    s.add_argument("--tau", type=float, default=0.7)
    s.add_argument("--eta-magnitude", type=float, default=2.0)
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in [("learn", cmd_learn, "learn a profile.json"),
                                 ("disambiguate", cmd_disambiguate, "P-V disambiguation accuracy"),
                                 ("evidence", cmd_evidence, "extract evidence of personalization")]:
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--observations", required=True)
        s.add_argument("--topic-maps", required=True)
        s.set_defaults(func=func)
        if name == "evidence":
            s.add_argument("--profile", required=True)
            s.add_argument("--top", type=int, default=10)

    s = sub.add_parser("evaluate", parents=[common], help="retrieval metrics against ground_truth.json")
    s.add_argument("--profile", required=True)
    s.add_argument("--ground-truth", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("classify", parents=[common], help="user classification accuracy within a group")
    s.add_argument("--user", action="append", required=True, metavar="NAME=OBSERVATIONS")
    s.add_argument("--topic-maps", required=True)
    s.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        kind, msg = "file_not_found", f"{exc.filename}: {exc.strerror}"
    except TopicCountMismatch as exc:
        kind, msg = "topic_count_mismatch", str(exc)
    except (SchemaError, json.JSONDecodeError) as exc:
        kind, msg = "schema_violation", str(exc)
    except Exception as exc:  # noqa: BLE001
        kind, msg = "error", f"{type(exc).__name__}: {exc}"
    sys.stderr.write(json.dumps({"error": kind, "command": args.command, "message": msg}) + "\n")
    return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
