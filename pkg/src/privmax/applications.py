"""Application drivers that build quality universes from raw data.

Frequent itemset selection: a basket dataset yields a sparse universe over all
size-r itemsets of a vocabulary, with support fractions as quality. The
universe id space is the full combinatorial family C(V, r) -- only occurring
itemsets are materialized, everything else sits in the fill block -- and a
codec records the bijective id <-> itemset mapping for decoding.

PAC hypothesis selection: a finite hypothesis class with per-hypothesis errors
yields a dense universe with quality 1 - error, plus the error-radius shell
decomposition that governs how many near-minimizers the selection step must
tolerate.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple, Sequence

from .core import QualityUniverse
from .audit import NeighborPair


@dataclass(frozen=True)
class BasketDataset:
    """Per-user token baskets: the raw input of the itemset driver.

    baskets hold deduplicated tokens drawn from the sorted vocabulary;
    max_basket_len is the declared bound B on basket size.
    """

    baskets: tuple[frozenset, ...]
    vocabulary: tuple[str, ...]
    max_basket_len: int

    def __post_init__(self) -> None:
        if not self.baskets:
            raise ValueError("dataset must contain at least one basket")
        vocab = set(self.vocabulary)
        for b in self.baskets:
            if len(b) > self.max_basket_len:
                raise ValueError(f"basket of size {len(b)} exceeds declared bound {self.max_basket_len}")
            if not b <= vocab:
                raise ValueError(f"basket tokens {sorted(b - vocab)} missing from vocabulary")

    @property
    def n(self) -> int:
        return len(self.baskets)

    @classmethod
    def from_lists(cls, baskets: Sequence[Sequence[str]]) -> "BasketDataset":
        sets = tuple(frozenset(b) for b in baskets)
        if not sets:
            raise ValueError("dataset must contain at least one basket")
        vocab = tuple(sorted(set().union(*sets)))
        max_len = max(len(b) for b in sets)
        return cls(baskets=sets, vocabulary=vocab, max_basket_len=max_len)


def load_baskets(path) -> BasketDataset:
    """Read a basket file: one basket per line, whitespace-separated tokens.

    Tokens are deduplicated per basket; blank lines are skipped; an empty file
    is an error. Vocabulary order (and therefore id assignment) is the sorted
    token order, stable across reloads.
    """
    baskets = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                baskets.append(tokens)
    if not baskets:
        raise ValueError(f"no baskets found in {path}")
    return BasketDataset.from_lists(baskets)


def _comb_rank(indices: tuple[int, ...], v: int) -> int:
    """0-based rank of an ascending index combination in lexicographic order.

    Counts, per position, the combinations whose element there is smaller
    given the shared prefix; the count telescopes to C(v-prev-1, q) - C(v-c, q),
    keeping this O(r) even for astronomically large vocabularies.
    """
    r = len(indices)
    rank = 0
    prev = -1
    for pos, c in enumerate(indices):
        q = r - pos
        rank += math.comb(v - prev - 1, q) - math.comb(v - c, q)
        prev = c
    return rank


def _comb_unrank(rank: int, v: int, r: int) -> tuple[int, ...]:
    """Inverse of :func:`_comb_rank`; binary-searched per position so it stays
    O(r log v) even for astronomically large vocabularies."""
    if not 0 <= rank < math.comb(v, r):
        raise ValueError(f"rank {rank} outside [0, C({v},{r}))")
    indices = []
    base = 0  # smallest index still available
    for pos in range(r):
        rem = r - pos
        vv = v - base  # candidates remaining
        total = math.comb(vv, rem)
        # combos with first element < a (relative): total - C(vv - a, rem)
        lo, hi = 0, vv - rem  # relative offset of this position's element
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if total - math.comb(vv - mid, rem) <= rank:
                lo = mid
            else:
                hi = mid - 1
        rank -= total - math.comb(vv - lo, rem)
        indices.append(base + lo)
        base = base + lo + 1
    return tuple(indices)


@dataclass(frozen=True)
class ItemsetCodec:
    """Bijective, stable mapping between universe ids and size-r itemsets.

    Ids 1..L are the occurring itemsets in universe (canonical sparse) order.
    Ids above L enumerate the non-occurring itemsets in lexicographic order
    over the full C(vocab_size, r) family; tokens beyond the materialized
    vocabulary (from inflation) decode to synthetic "_unused<i>" names.
    """

    vocabulary: tuple[str, ...]
    vocab_size: int
    r: int
    occurring: tuple[tuple[str, ...], ...]
    occurring_ranks: tuple[int, ...]  # sorted lexicographic ranks of `occurring`

    @property
    def universe_size(self) -> int:
        return math.comb(self.vocab_size, self.r)

    def _token(self, idx: int) -> str:
        return self.vocabulary[idx] if idx < len(self.vocabulary) else f"_unused{idx}"

    def decode(self, item_id: int) -> tuple[str, ...]:
        if not 1 <= item_id <= self.universe_size:
            raise ValueError(f"item id {item_id} outside [1, {self.universe_size}]")
        if item_id <= len(self.occurring):
            return self.occurring[item_id - 1]
        # j-th non-occurring itemset in lex order; skip past occupied ranks
        j = item_id - len(self.occurring)
        rank = j - 1
        while True:
            shifted = j - 1 + bisect_right(self.occurring_ranks, rank)
            if shifted == rank:
                break
            rank = shifted
        return tuple(self._token(i) for i in _comb_unrank(rank, self.vocab_size, self.r))

    def _token_index(self, token: str) -> int:
        try:
            return self.vocabulary.index(token)
        except ValueError:
            pass
        if token.startswith("_unused"):
            idx = int(token[len("_unused"):])
            if len(self.vocabulary) <= idx < self.vocab_size:
                return idx
        raise ValueError(f"unknown token {token!r}")

    def encode(self, itemset: Sequence[str]) -> int:
        tokens = tuple(sorted(set(itemset)))
        if len(tokens) != self.r:
            raise ValueError(f"itemset must have exactly {self.r} distinct tokens")
        indices = tuple(sorted(self._token_index(t) for t in tokens))
        rank = _comb_rank(indices, self.vocab_size)
        pos = bisect_right(self.occurring_ranks, rank)
        if pos and self.occurring_ranks[pos - 1] == rank:
            return self.occurring.index(tokens) + 1
        return len(self.occurring) + (rank - pos) + 1


class ItemsetQuality(NamedTuple):
    universe: QualityUniverse
    codec: ItemsetCodec


def itemset_quality(d: BasketDataset, r: int, vocab_size: int | None = None) -> ItemsetQuality:
    """Sparse quality universe over all size-r itemsets: support fraction as quality.

    K = C(V, r) where V is the (optionally inflated) vocabulary size; only the
    L occurring itemsets are materialized, so L <= n * C(B, r) regardless of
    V. Canonical sparse order is support descending with ties by lexicographic
    itemset rank, recorded in the returned codec.

    r > B is not an error: it returns the all-fill universe with L = 0.
    """
    if r < 1:
        raise ValueError(f"itemset size must be >= 1, got {r}")
    v = len(d.vocabulary) if vocab_size is None else vocab_size
    if v < len(d.vocabulary):
        raise ValueError(f"vocab_size {v} smaller than the {len(d.vocabulary)} observed tokens")
    k = math.comb(v, r)
    if k < 1:
        raise ValueError(f"no size-{r} itemsets over a {v}-token vocabulary")
    index = {tok: i for i, tok in enumerate(d.vocabulary)}
    counts: Counter = Counter()
    for basket in d.baskets:
        indices = sorted(index[t] for t in basket)
        for combo in combinations(indices, r):
            counts[combo] += 1
    n = d.n
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    values = [c / n for _, c in ordered]
    universe = QualityUniverse.sparse(values, k=k, n=n)
    occurring = tuple(tuple(d.vocabulary[i] for i in combo) for combo, _ in ordered)
    ranks = tuple(sorted(_comb_rank(combo, v) for combo, _ in ordered))
    codec = ItemsetCodec(
        vocabulary=d.vocabulary,
        vocab_size=v,
        r=r,
        occurring=occurring,
        occurring_ranks=ranks,
    )
    return ItemsetQuality(universe=universe, codec=codec)


def itemset_quality_dense(d: BasketDataset, r: int) -> QualityUniverse:
    """Dense variant with id = lexicographic rank + 1 over C(V, r).

    Ids align across datasets sharing a vocabulary, which is what neighbor
    pairs need; only usable at desk scale (the full family is materialized).
    """
    if r < 1:
        raise ValueError(f"itemset size must be >= 1, got {r}")
    v = len(d.vocabulary)
    k = math.comb(v, r)
    if k < 1:
        raise ValueError(f"no size-{r} itemsets over a {v}-token vocabulary")
    if k > 10**6:
        raise ValueError(f"dense itemset universe with K = {k} is too large; use itemset_quality")
    index = {tok: i for i, tok in enumerate(d.vocabulary)}
    values = [0.0] * k
    for basket in d.baskets:
        indices = sorted(index[t] for t in basket)
        for combo in combinations(indices, r):
            values[_comb_rank(combo, v)] += 1.0
    n = d.n
    return QualityUniverse.dense([c / n for c in values], n=n)


def basket_neighbor(d: BasketDataset, index: int, replacement: Sequence[str]) -> BasketDataset:
    """Dataset with basket ``index`` replaced: the single-record change.

    The replacement is deduplicated, must respect the declared basket bound,
    and must stay inside the vocabulary so both datasets share one universe.
    """
    if not 0 <= index < d.n:
        raise ValueError(f"basket index {index} outside [0, {d.n - 1}]")
    new = frozenset(replacement)
    if len(new) > d.max_basket_len:
        raise ValueError(f"replacement of size {len(new)} exceeds the bound {d.max_basket_len}")
    if not new <= set(d.vocabulary):
        raise ValueError("replacement tokens must come from the dataset vocabulary")
    baskets = list(d.baskets)
    baskets[index] = new
    return BasketDataset(
        baskets=tuple(baskets),
        vocabulary=d.vocabulary,
        max_basket_len=d.max_basket_len,
    )


def basket_neighbor_pair(
    d: BasketDataset, index: int, replacement: Sequence[str], r: int
) -> NeighborPair:
    """Neighboring dense itemset universes from a single-basket change."""
    d2 = basket_neighbor(d, index, replacement)
    return NeighborPair(
        left=itemset_quality_dense(d, r),
        right=itemset_quality_dense(d2, r),
        provenance=f"basket {index} replaced by {sorted(frozenset(replacement))}",
    )


@dataclass(frozen=True)
class HypothesisClass:
    """Finite hypothesis class as prediction vectors over one labeled sample."""

    predictions: tuple[tuple, ...]
    labels: tuple
    d: int  # VC-dimension surrogate, supplied not computed

    def __post_init__(self) -> None:
        if not self.predictions:
            raise ValueError("hypothesis class must be nonempty")
        if not self.labels:
            raise ValueError("sample must be nonempty")
        for i, p in enumerate(self.predictions):
            if len(p) != len(self.labels):
                raise ValueError(
                    f"hypothesis {i} predicts {len(p)} points but the sample has {len(self.labels)}"
                )
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")

    def empirical_errors(self) -> list[float]:
        n = len(self.labels)
        return [
            sum(1 for p, y in zip(preds, self.labels) if p != y) / n
            for preds in self.predictions
        ]


def empirical_quality(h: HypothesisClass) -> QualityUniverse:
    """Dense universe over hypotheses with quality 1 - empirical error."""
    errors = h.empirical_errors()
    return QualityUniverse.dense([1.0 - e for e in errors], n=len(h.labels))


@dataclass(frozen=True)
class ShellDecomposition:
    """Counts of hypotheses within t error-radius widths of the best one.

    shell_sizes[t] counts errors within t * width of the minimum, for
    t = 0..R; wider radius means a larger shell, so sizes are nondecreasing.
    """

    shell_sizes: tuple[int, ...]
    width: float
    min_err: float
    C0: float
    R: int

    def __post_init__(self) -> None:
        if len(self.shell_sizes) != self.R + 1:
            raise ValueError(f"need R+1 = {self.R + 1} shell sizes, got {len(self.shell_sizes)}")
        if any(a > b for a, b in zip(self.shell_sizes, self.shell_sizes[1:])):
            raise ValueError("shell sizes must be nondecreasing in t")


def shell_decomposition(
    errors: Sequence[float], d: int, n: int, delta0: float, C0: float = 1.0
) -> ShellDecomposition:
    """Error-radius shells around the best hypothesis.

    width = C0 * sqrt(d * ln(n/delta0) / n) is the uniform-convergence radius;
    R = ceil(sqrt(n / (d * ln n))) shells (constant 1) cover the range the
    selection analysis needs.
    """
    if not errors:
        raise ValueError("need at least one error value")
    if not all(math.isfinite(e) for e in errors):
        raise ValueError("error values must all be finite")
    if d < 1 or n <= 1:
        raise ValueError(f"need d >= 1 and n > 1, got d={d}, n={n}")
    if not 0.0 < delta0 < 1.0:
        raise ValueError(f"delta0 must lie in (0, 1), got {delta0}")
    if not C0 > 0.0:
        raise ValueError(f"C0 must be positive, got {C0}")
    width = C0 * math.sqrt(d * math.log(n / delta0) / n)
    R = math.ceil(math.sqrt(n / (d * math.log(n))))
    min_err = min(errors)
    sizes = tuple(
        sum(1 for e in errors if e <= min_err + t * width) for t in range(R + 1)
    )
    return ShellDecomposition(shell_sizes=sizes, width=width, min_err=min_err, C0=C0, R=R)


class TStarResult(NamedTuple):
    t: int
    exhausted: bool  # True when no t <= R-1 satisfied the inequality


def t_star(
    s: ShellDecomposition,
    alpha: float,
    delta: float,
    d: int,
    n: int,
    C: float,
) -> TStarResult:
    """Smallest t whose next shell is cheap enough to select from:

        (ln|H(t+1)| + ln(1/delta)) / t <= C0 * alpha * sqrt(d n ln n) / C.

    Scans t = 1..R-1 and returns R flagged when nothing qualifies. C is the
    caller's universal constant; see :func:`pac_selection_constant` for the
    concrete instantiation the driver uses.
    """
    if not C > 0.0:
        raise ValueError(f"C must be positive, got {C}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    rhs = s.C0 * alpha * math.sqrt(d * n * math.log(n)) / C
    for t in range(1, s.R):
        size_next = s.shell_sizes[t + 1]
        if (math.log(size_next) + math.log(1.0 / delta)) / t <= rhs:
            return TStarResult(t=t, exhausted=False)
    return TStarResult(t=s.R, exhausted=True)


def pac_selection_constant(n: int, alpha: float, delta: float, ell: int) -> float:
    """Concrete constant C making C * ln(ell/delta) / (n*alpha) equal the
    adaptive mechanism's required margin gamma*(ell) at eta = delta.

    The selection analysis leaves C symbolic; this ties it to the mechanism's
    actual guarantee so shell selection uses a computable quantity.
    """
    from .mechanisms import lmm_required_margin

    gamma = lmm_required_margin(n, alpha, delta, delta, max(ell, 1))
    denom = math.log(max(ell, 1) / delta)
    return gamma * n * alpha / denom
