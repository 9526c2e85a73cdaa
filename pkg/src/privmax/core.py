"""Core types for private selection: scored item universes, order statistics,
margin predicates, and the rank-indexed threshold schedule used by the
margin-adaptive mechanism."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

NEG_INF = float("-inf")


class ThresholdPair(NamedTuple):
    """Margin width ``t`` and search threshold ``T`` for one rank ``r``.

    Both quantities shrink like 1/n and grow logarithmically in r; ``T >= t > 0``
    always holds for valid inputs.
    """

    t: float
    T: float
    r: int


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy-loss pair (alpha, delta) governing one mechanism invocation.

    delta = 0 is allowed only for pure-DP baselines; mechanisms that need an
    approximate budget call :meth:`require_approximate`.
    """

    alpha: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    def require_approximate(self) -> None:
        if self.delta <= 0.0:
            raise ValueError("this mechanism requires delta in (0, 1)")


class QualityUniverse:
    """Per-item quality scores f(1..k) with declared sensitivity 1/n.

    Two storage forms:

    * dense -- one finite value per item, ids 1..k in caller order;
    * sparse -- explicit values sorted descending at ids 1..L, every id above L
      carrying the fill value. ``k`` may be combinatorially large (it is never
      materialized), which is what makes itemset-scale universes workable.

    Instances are immutable by convention; all operations are pure reads, so a
    universe may be shared freely across threads.
    """

    __slots__ = ("k", "n", "values", "nonzeros", "fill", "_sorted", "_ids_desc")

    def __init__(self, *, k, n, values=None, nonzeros=None, fill=0.0):
        if not (isinstance(k, int) and k >= 1):
            raise ValueError(f"universe size k must be a positive integer, got {k}")
        if not (isinstance(n, int) and n >= 1):
            raise ValueError(f"dataset size n must be a positive integer, got {n}")
        if (values is None) == (nonzeros is None):
            raise ValueError("exactly one of values/nonzeros must be given")
        self.k = k
        self.n = n
        if values is not None:
            vals = tuple(float(v) for v in values)
            if len(vals) != k:
                raise ValueError(f"dense universe needs exactly {k} values, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("dense values must all be finite")
            self.values = vals
            self.nonzeros = None
            self.fill = 0.0
            self._sorted = tuple(sorted(vals, reverse=True))
            # stable sort: ties keep ascending-id order
            self._ids_desc = tuple(
                i + 1 for i in sorted(range(k), key=lambda j: -vals[j])
            )
        else:
            nz = tuple(float(v) for v in nonzeros)
            fill = float(fill)
            if not math.isfinite(fill):
                raise ValueError("fill value must be finite")
            if len(nz) > k:
                raise ValueError(f"sparse universe has {len(nz)} explicit values but k={k}")
            if not all(math.isfinite(v) for v in nz):
                raise ValueError("explicit sparse values must all be finite")
            if any(nz[i] < nz[i + 1] for i in range(len(nz) - 1)):
                raise ValueError("sparse values must be sorted descending")
            if nz and nz[-1] < fill:
                raise ValueError("sparse values must all be >= the fill value")
            self.values = None
            self.nonzeros = nz
            self.fill = fill
            self._sorted = None
            self._ids_desc = None

    @classmethod
    def dense(cls, values: Sequence[float], n: int) -> "QualityUniverse":
        values = tuple(values)
        return cls(k=len(values), n=n, values=values)

    @classmethod
    def sparse(cls, nonzeros: Sequence[float], k: int, n: int, fill: float = 0.0) -> "QualityUniverse":
        return cls(k=k, n=n, nonzeros=tuple(nonzeros), fill=fill)

    @property
    def is_sparse(self) -> bool:
        return self.nonzeros is not None

    @property
    def sensitivity(self) -> float:
        return 1.0 / self.n

    @property
    def explicit_count(self) -> int:
        """L: number of explicitly stored values (== k for dense universes)."""
        return self.k if self.values is not None else len(self.nonzeros)

    def value(self, item: int) -> float:
        """Quality of item id in [1, k]."""
        if not 1 <= item <= self.k:
            raise ValueError(f"item id {item} outside [1, {self.k}]")
        if self.values is not None:
            return self.values[item - 1]
        if item <= len(self.nonzeros):
            return self.nonzeros[item - 1]
        return self.fill

    def __repr__(self) -> str:
        form = "sparse" if self.is_sparse else "dense"
        return f"QualityUniverse({form}, k={self.k}, n={self.n}, L={self.explicit_count})"


def order_stat(u: QualityUniverse, r: int) -> float:
    """The r-th largest quality value; -inf for the r = k+1 sentinel.

    Sparse universes return the fill value for ranks past their explicit
    values. -inf is never a stored value, only this sentinel.
    """
    if not 1 <= r <= u.k + 1:
        raise ValueError(f"rank {r} outside [1, {u.k + 1}]")
    if r == u.k + 1:
        return NEG_INF
    if u.values is not None:
        return u._sorted[r - 1]
    if r <= len(u.nonzeros):
        return u.nonzeros[r - 1]
    return u.fill


def satisfies_margin(u: QualityUniverse, ell: int, gamma: float) -> bool:
    """True iff at most ell items lie within gamma of the top value.

    Formally: order_stat(ell+1) < order_stat(1) - gamma. At ell = k this is
    always true via the -inf sentinel.
    """
    if not 1 <= ell <= u.k:
        raise ValueError(f"ell {ell} outside [1, {u.k}]")
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return order_stat(u, ell + 1) < order_stat(u, 1) - gamma


def top_set(u: QualityUniverse, ell: int) -> tuple[int, ...]:
    """Ids of the ell highest-quality items, ties broken by lowest id.

    The result is ordered by descending value (ties ascending by id), i.e. the
    first ell entries of the stable descending sort.
    """
    if not 1 <= ell <= u.k:
        raise ValueError(f"ell {ell} outside [1, {u.k}]")
    if u.values is not None:
        return u._ids_desc[:ell]
    # canonical sparse ids are already in descending-value order, and every
    # explicit value >= fill, so the top set is always the prefix 1..ell
    return tuple(range(1, ell + 1))


@lru_cache(maxsize=200_000)
def compute_thresholds(n: int, alpha: float, delta: float, r: int) -> ThresholdPair:
    """Margin width t and search threshold T for rank r.

        t = (6/n) * (1 + ln(3r/delta)/alpha)
        T = (3/(n a)) ln(3/(2 delta)) + (6/(n a)) ln(3/delta)
            + (12/(n a)) ln(3 r (r+1)/delta) + t

    Both are strictly increasing in r and scale as 1/n for fixed (alpha, delta).
    The result is cached: the function is pure and sits on the adaptive
    mechanism's per-invocation hot path.
    """
    if not (isinstance(n, int) and n >= 1):
        raise ValueError(f"n must be a positive integer, got {n}")
    if not (isinstance(r, int) and r >= 1):
        raise ValueError(f"rank must be a positive integer, got {r}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    na = n * alpha
    t = (6.0 / n) * (1.0 + math.log(3.0 * r / delta) / alpha)
    T = (
        (3.0 / na) * math.log(3.0 / (2.0 * delta))
        + (6.0 / na) * math.log(3.0 / delta)
        + (12.0 / na) * math.log(3.0 * r * (r + 1) / delta)
        + t
    )
    return ThresholdPair(t=t, T=T, r=r)


@dataclass(frozen=True)
class MarginCertificate:
    """Assertion that the (ell, gamma)-margin condition held during a run."""

    ell: int
    gamma: float

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def from_run(cls, n: int, budget: PrivacyBudget, ell: int) -> "MarginCertificate":
        """Certificate the adaptive mechanism issues when it stops at rank ell."""
        return cls(ell=ell, gamma=compute_thresholds(n, budget.alpha, budget.delta, ell).t)

    def holds_for(self, u: QualityUniverse) -> bool:
        return satisfies_margin(u, self.ell, self.gamma)


class MechanismOutcome(NamedTuple):
    """Selected item plus run diagnostics.

    ``m`` is the noisy max estimate and ``ell`` the certified rank, when the
    mechanism produces them. ``certified`` is False on the cap-exhausted
    fallback path, where no margin certificate backs the selection.
    """

    item: int
    budget: PrivacyBudget
    m: float | None = None
    ell: int | None = None
    certified: bool = True
    seed: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "item": self.item,
            "m": self.m,
            "ell": self.ell,
            "certified": self.certified,
            "alpha": self.budget.alpha,
            "delta": self.budget.delta,
            "seed": self.seed,
        }


def universe_from_dict(doc: dict) -> QualityUniverse:
    """Build a universe from its JSON document form.

    Dense: {"k": int, "n": int, "values": [...]}.
    Sparse: {"k": int, "n": int, "nonzeros": [...], "fill": float}.
    """
    if "values" in doc:
        u = QualityUniverse(k=int(doc["k"]), n=int(doc["n"]), values=doc["values"])
    elif "nonzeros" in doc:
        u = QualityUniverse(
            k=int(doc["k"]),
            n=int(doc["n"]),
            nonzeros=doc["nonzeros"],
            fill=float(doc.get("fill", 0.0)),
        )
    else:
        raise ValueError("universe document needs a 'values' or 'nonzeros' field")
    return u


def universe_to_dict(u: QualityUniverse) -> dict:
    if u.values is not None:
        return {"k": u.k, "n": u.n, "values": list(u.values)}
    return {"k": u.k, "n": u.n, "nonzeros": list(u.nonzeros), "fill": u.fill}


def load_universe(path) -> QualityUniverse:
    with open(path, "r", encoding="utf-8") as fh:
        return universe_from_dict(json.load(fh))


def save_universe(u: QualityUniverse, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(universe_to_dict(u), fh)
