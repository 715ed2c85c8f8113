"""Ranked result lists: permutations, vanilla/personalized alignment and diff statistics.

Ranks are 1-based throughout, so ``perm.rank(item)`` of the top item is 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateItemError, SchemaError


@dataclass(frozen=True)
class Permutation:
    """A bijection rank -> item over a finite item set.

    ``items[r - 1]`` is the item at rank ``r``.
    """

    items: tuple[str, ...]
    _pos: dict = field(init=False, repr=False, compare=False)

    def __init__(self, items: Iterable[str]):
        items = tuple(items)
        pos = {}
        for r, d in enumerate(items, start=1):
            if d in pos:
                raise DuplicateItemError(d)
            pos[d] = r
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "_pos", pos)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, rank: int) -> str:
        """Item at 1-based ``rank``."""
        if rank < 1 or rank > len(self.items):
            raise IndexError(rank)
        return self.items[rank - 1]

    def rank(self, item: str) -> int:
        """Inverse lookup: the 1-based rank of ``item``."""
        return self._pos[item]

    @property
    def item_set(self) -> frozenset:
        return frozenset(self.items)

    def ranks_in(self, other: "Permutation") -> np.ndarray:
        """Ranks in ``other`` of this permutation's items, in this order.

        For ``pi.ranks_in(sigma)`` entry ``i - 1`` is sigma^-1(pi(i)).
        """
        return np.fromiter((other._pos[d] for d in self.items), dtype=np.int64, count=len(self.items))


@dataclass(frozen=True)
class QueryObservation:
    """One aligned (vanilla, personalized) result pair for a query."""

    query_id: str
    sigma: Permutation
    pi: Permutation

    def __post_init__(self):
        if self.sigma.item_set != self.pi.item_set:
            raise ValueError(f"query {self.query_id!r}: vanilla and personalized lists cover different items")

    @property
    def n(self) -> int:
        return len(self.sigma)

    @property
    def is_reranked(self) -> bool:
        return self.sigma.items != self.pi.items


def _check_unique(items: Sequence[str]) -> None:
    seen = set()
    for d in items:
        if d in seen:
            raise DuplicateItemError(d)
        seen.add(d)


def align_lists(vanilla: Sequence[str], personalized: Sequence[str], query_id: str = "") -> QueryObservation:
    """Align two ranked lists onto their common item set.

    Items present in only one list are appended, in their original relative
    order, to the end of the other list.

    >>> obs = align_lists(["a", "b"], ["b", "a", "x"])
    >>> obs.sigma.items, obs.pi.items
    (('a', 'b', 'x'), ('b', 'a', 'x'))
    """
    vanilla = list(vanilla)
    personalized = list(personalized)
    _check_unique(vanilla)
    _check_unique(personalized)
    in_v, in_p = set(vanilla), set(personalized)
    sigma = vanilla + [d for d in personalized if d not in in_v]
    pi = personalized + [d for d in vanilla if d not in in_p]
    return QueryObservation(query_id, Permutation(sigma), Permutation(pi))


def kendall_tau_distance(a: Permutation, b: Permutation) -> int:
    """Number of item pairs ordered differently by ``a`` and ``b``."""
    r = a.ranks_in(b)
    # r is a permutation of 1..n; count inversions
    n = len(r)
    if n < 2:
        return 0
    return int(np.sum(np.triu(r[:, None] > r[None, :], k=1)))


def displacement_stats(obs: QueryObservation) -> dict:
    """Diff statistics of an aligned pair.

    ``total_displacement`` is sum_d |sigma^-1(d) - pi^-1(d)| and ``max_shift``
    the largest single-item rank shift (moving one item from rank 5 to rank 1
    has max_shift 4).
    """
    shift = np.abs(obs.pi.ranks_in(obs.sigma) - np.arange(1, obs.n + 1))
    return {
        "total_displacement": int(shift.sum()),
        "max_shift": int(shift.max(initial=0)),
        "is_reranked": obs.is_reranked,
        "kendall_tau_distance": kendall_tau_distance(obs.pi, obs.sigma),
    }


def read_observations(path) -> list[QueryObservation]:
    """Load ``observations.jsonl`` rows ``{query_id, vanilla, personalized}``."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(row, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            try:
                qid, van, per = str(row["query_id"]), row["vanilla"], row["personalized"]
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
            if not isinstance(van, list) or not isinstance(per, list):
                raise SchemaError(f"{path}:{lineno}: vanilla/personalized must be lists")
            out.append(align_lists([str(d) for d in van], [str(d) for d in per], query_id=qid))
    return out


def write_observations(path, observations: Iterable[QueryObservation]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for obs in observations:
            row = {"query_id": obs.query_id, "vanilla": list(obs.sigma.items), "personalized": list(obs.pi.items)}
            fh.write(json.dumps(row) + "\n")
