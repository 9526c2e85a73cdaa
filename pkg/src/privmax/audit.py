"""Statistical falsification harness for (alpha, delta)-DP claims.

The audits estimate a mechanism's outcome distribution on two neighboring
universes and test, per singleton outcome and in both directions, the
inequality P(i) <= e^alpha * P'(i) + delta with a two-sided Hoeffding slack.
A failing audit is a bug signal; a passing audit is evidence, not proof --
singleton checks over finitely many sampled outcomes cannot certify privacy.

Also here: the adversarial instance families used as audit fixtures and
utility benchmarks, and exact (no-sampling) distribution oracles for the
exponential-mechanism family.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, NamedTuple, Sequence

from .core import PrivacyBudget, QualityUniverse, order_stat, top_set
from .mechanisms import Fail
from .noise import NoiseSource

FAIL_KEY = "fail"

# an audit whose statistical slack exceeds this cannot certify anything useful
_SLACK_WARN = 0.1

# per-side seed offset so left/right estimates never share a trial seed
_RIGHT_SEED_OFFSET = 1 << 32


def hoeffding_slack(trials: int, confidence: float = 0.99) -> float:
    """Two-sided Hoeffding deviation bound for one empirical frequency."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))


def outcome_key(result) -> Hashable:
    """Distribution-table key for a mechanism result; Fail is a distinguished
    outcome, not an error."""
    return FAIL_KEY if isinstance(result, Fail) else result.item


def estimate_distribution(
    mechanism: Callable,
    u: QualityUniverse,
    trials: int,
    seed: int,
    decode: Callable | None = None,
    zero_override: bool = False,
) -> dict:
    """Empirical outcome frequencies over ``trials`` runs of ``mechanism``.

    Trial t runs with an independent source seeded seed XOR t, so aggregation
    is order-independent and trials may be re-run or sharded reproducibly.
    ``decode`` maps a raw result to the reported outcome (defaults to the item
    id, or "fail"); ``zero_override`` propagates the deterministic noise mode
    to every trial.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    key = decode if decode is not None else outcome_key
    base = NoiseSource(seed, zero_override=zero_override)
    counts: Counter = Counter()
    for t in range(trials):
        counts[key(mechanism(u, base.spawn(t)))] += 1
    return {k: c / trials for k, c in counts.items()}


@dataclass(frozen=True)
class NeighborPair:
    """Two universes whose values differ by at most 1/n per item: the
    Lipschitz witness for a single-record change. Checked on construction."""

    left: QualityUniverse
    right: QualityUniverse
    provenance: str = ""

    def __post_init__(self) -> None:
        lu, ru = self.left, self.right
        if lu.k != ru.k or lu.n != ru.n:
            raise ValueError("neighbor universes must share k and n")
        bound = 1.0 / lu.n * (1.0 + 1e-9) + 1e-15
        if lu.is_sparse and ru.is_sparse:
            if lu.fill != ru.fill:
                raise ValueError("sparse neighbor universes must share the fill value")
            span = max(lu.explicit_count, ru.explicit_count)
        else:
            if lu.k > 10**7:
                raise ValueError("cannot validate a mixed/dense pair with k > 1e7")
            span = lu.k
        for i in range(1, span + 1):
            if abs(lu.value(i) - ru.value(i)) > bound:
                raise ValueError(
                    f"item {i} moves by {abs(lu.value(i) - ru.value(i)):.6g} > 1/n = {1.0 / lu.n:.6g}"
                )


class OutcomeCheck(NamedTuple):
    """One slack-adjusted inequality check for a single outcome."""

    outcome: Hashable
    direction: str  # "left_vs_right" or "right_vs_left"
    p_left: float
    p_right: float
    bound: float
    slack: float
    passed: bool


@dataclass
class AuditReport:
    """Per-outcome probabilities and pass/fail results for one audit run."""

    kind: str
    alpha: float
    delta: float
    slack: float
    checks: list[OutcomeCheck]
    trials: int | None = None
    confidence: float | None = None
    group_size: int = 1
    metadata: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def violations(self) -> list[OutcomeCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "delta": self.delta,
            "trials": self.trials,
            "confidence": self.confidence,
            "slack": self.slack,
            "group_size": self.group_size,
            "passed": self.passed,
            "violations": len(self.violations),
            "warnings": self.warnings,
            "metadata": self.metadata,
            "checks": [c._asdict() for c in self.checks],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["outcome", "direction", "p_left", "p_right", "bound", "slack", "pass"])
            for c in self.checks:
                writer.writerow(
                    [c.outcome, c.direction, f"{c.p_left:.10g}", f"{c.p_right:.10g}",
                     f"{c.bound:.10g}", f"{c.slack:.10g}", c.passed]
                )


def dp_outcome_checks(
    p_left: dict, p_right: dict, alpha: float, delta: float, slack: float = 0.0
) -> list[OutcomeCheck]:
    """Per-outcome approximate-DP checks in both directions.

    Direction left_vs_right asserts p_left(i) <= e^alpha * p_right(i) + delta
    + slack * (1 + e^alpha); the slack term covers estimation error on both
    sides (upper on the left, lower on the right). slack = 0 gives the exact
    check for brute-force distributions.
    """
    ea = math.exp(alpha)
    combined = slack * (1.0 + ea)
    checks = []
    for key in sorted(set(p_left) | set(p_right), key=str):
        pl = p_left.get(key, 0.0)
        pr = p_right.get(key, 0.0)
        bound_lr = ea * pr + delta + combined
        checks.append(OutcomeCheck(key, "left_vs_right", pl, pr, bound_lr, slack, pl <= bound_lr))
        bound_rl = ea * pl + delta + combined
        checks.append(OutcomeCheck(key, "right_vs_left", pl, pr, bound_rl, slack, pr <= bound_rl))
    return checks


def group_outcome_checks(
    p_left: dict, p_right: dict, k: int, alpha: float, delta: float, slack: float = 0.0
) -> list[OutcomeCheck]:
    """Per-outcome group-privacy lower-bound checks across a k-record change:

        p_left(i) >= e^(-k alpha) * p_right(i) - delta/(1 - e^(-alpha)) - slack-term

    and symmetrically for the other direction.
    """
    if k < 0:
        raise ValueError(f"group size must be >= 0, got {k}")
    eka = math.exp(-k * alpha)
    leak = delta / (1.0 - math.exp(-alpha)) if delta > 0.0 else 0.0
    combined = slack * (1.0 + eka)
    checks = []
    for key in sorted(set(p_left) | set(p_right), key=str):
        pl = p_left.get(key, 0.0)
        pr = p_right.get(key, 0.0)
        bound_lr = eka * pr - leak - combined
        checks.append(OutcomeCheck(key, "left_vs_right", pl, pr, bound_lr, slack, pl >= bound_lr))
        bound_rl = eka * pl - leak - combined
        checks.append(OutcomeCheck(key, "right_vs_left", pl, pr, bound_rl, slack, pr >= bound_rl))
    return checks


def check_approx_dp(
    pair: NeighborPair,
    mechanism: Callable,
    budget: PrivacyBudget,
    trials: int,
    confidence: float = 0.99,
    seed: int = 0,
    decode: Callable | None = None,
) -> AuditReport:
    """Monte Carlo approximate-DP audit of ``mechanism`` on a neighbor pair.

    Estimates both outcome distributions (independent derived seeds per side),
    then runs the per-outcome inequality in both directions at the stated
    confidence. Singleton outcome sets only; see the module docstring for what
    a pass does and does not mean.
    """
    slack = hoeffding_slack(trials, confidence)
    p_left = estimate_distribution(mechanism, pair.left, trials, seed, decode)
    p_right = estimate_distribution(mechanism, pair.right, trials, seed + _RIGHT_SEED_OFFSET, decode)
    checks = dp_outcome_checks(p_left, p_right, budget.alpha, budget.delta, slack)
    warnings = []
    if slack > _SLACK_WARN:
        warnings.append(
            f"slack {slack:.4f} exceeds {_SLACK_WARN}; increase trials for a meaningful audit"
        )
    return AuditReport(
        kind="approx_dp",
        alpha=budget.alpha,
        delta=budget.delta,
        slack=slack,
        checks=checks,
        trials=trials,
        confidence=confidence,
        metadata={"provenance": pair.provenance, "seed": seed},
        warnings=warnings,
    )


def check_group_privacy(
    u_far: QualityUniverse,
    u_near: QualityUniverse,
    k: int,
    mechanism: Callable,
    budget: PrivacyBudget,
    trials: int,
    confidence: float = 0.99,
    seed: int = 0,
    decode: Callable | None = None,
    provenance: str = "",
) -> AuditReport:
    """Group-privacy audit across universes differing by a k-step neighbor chain."""
    slack = hoeffding_slack(trials, confidence)
    p_left = estimate_distribution(mechanism, u_far, trials, seed, decode)
    p_right = estimate_distribution(mechanism, u_near, trials, seed + _RIGHT_SEED_OFFSET, decode)
    checks = group_outcome_checks(p_left, p_right, k, budget.alpha, budget.delta, slack)
    warnings = []
    if slack > _SLACK_WARN:
        warnings.append(
            f"slack {slack:.4f} exceeds {_SLACK_WARN}; increase trials for a meaningful audit"
        )
    return AuditReport(
        kind="group_privacy",
        alpha=budget.alpha,
        delta=budget.delta,
        slack=slack,
        checks=checks,
        trials=trials,
        confidence=confidence,
        group_size=k,
        metadata={"provenance": provenance, "seed": seed},
        warnings=warnings,
    )


def build_threshold_example(K: int, entries: Sequence[int]) -> QualityUniverse:
    """Counting instance over items 1..K from integer dataset entries.

    value(i) = |{j : entries_j >= i}| / n, which is nonincreasing in i; stored
    in compact form (explicit values down to the last nonzero, fill 0). With
    all entries equal to 1 this is the clear-maximizer instance whose top item
    survives any n/2 - 1 record changes.
    """
    entries = [int(e) for e in entries]
    if not entries:
        raise ValueError("entries must be nonempty")
    if any(not 1 <= e <= K for e in entries):
        raise ValueError(f"entries must lie in [1, {K}]")
    n = len(entries)
    top = max(entries)
    ge_counts = [0] * (top + 2)
    for e in entries:
        ge_counts[e] += 1
    # suffix-sum: count of entries >= i
    for i in range(top - 1, 0, -1):
        ge_counts[i] += ge_counts[i + 1]
    values = [ge_counts[i] / n for i in range(1, top + 1)]
    return QualityUniverse.sparse(values, k=K, n=n)


def lb2_delta_bound(ell: int, alpha: float) -> float:
    """Largest delta for which the near-maximizer lower bound applies to the
    hard family: (1 - e^(-alpha)) / (2 (ell - 1))."""
    if ell < 2:
        raise ValueError(f"ell must be >= 2, got {ell}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return (1.0 - math.exp(-alpha)) / (2.0 * (ell - 1))


def build_lb2_family(
    ell: int, n: int, alpha: float, universe_size: int | None = None
) -> tuple[list[QualityUniverse], int]:
    """Hard family of ell universes for the near-maximizer lower bound.

    Family member i scores 1/2 + m/n at item i, 1/2 at the other items of
    1..ell, and 0 elsewhere, where m = floor(min(n/2, ln((ell-1)/2)/alpha)).
    It arises from datasets whose first n/2 records are the full set 1..ell,
    next n/2 - m records empty, and last m records {i} -- so any two members
    differ in exactly m records, and each satisfies the (ell, m/n)-margin
    condition with its own item on top.

    Returns the family and m. universe_size pads the universe with zero items
    beyond ell (default: exactly ell items).
    """
    if ell < 2:
        raise ValueError(f"ell must be >= 2, got {ell}")
    if n < 2 or n % 2 != 0:
        raise ValueError(f"n must be an even integer >= 2, got {n}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    m = math.floor(min(n / 2.0, math.log((ell - 1) / 2.0) / alpha))
    if m < 1:
        raise ValueError(
            f"degenerate family: floor(min(n/2, ln((ell-1)/2)/alpha)) = {m} < 1"
        )
    k = ell if universe_size is None else universe_size
    if k < ell:
        raise ValueError(f"universe_size {k} smaller than ell {ell}")
    family = []
    for i in range(1, ell + 1):
        values = [0.5] * ell + [0.0] * (k - ell)
        values[i - 1] = 0.5 + m / n
        family.append(QualityUniverse.dense(values, n=n))
    return family, m


def exact_em_distribution(
    u: QualityUniverse, alpha: float, ell: int | None = None
) -> dict[int, float]:
    """Brute-force normalized weights of the (restricted) exponential mechanism.

    Direct normalization of exp(n*alpha*f(i)/2) over the support -- the
    sampling-free oracle the Monte Carlo estimates are checked against.
    Requires an enumerable support: dense, or ell within the explicit part of
    a sparse universe.
    """
    count = u.k if ell is None else ell
    if count > 10**6:
        raise ValueError("support too large to enumerate exactly")
    support = range(1, u.k + 1) if ell is None else top_set(u, ell)
    rate = 0.5 * u.n * alpha
    vmax = order_stat(u, 1)
    weights = {i: math.exp(rate * (u.value(i) - vmax)) for i in support}
    total = math.fsum(weights.values())
    return {i: w / total for i, w in weights.items()}


def em_expected_gap(u: QualityUniverse, alpha: float) -> float:
    """Exact expected quality gap E[f(1) - f(I)] of the exponential mechanism.

    Closed form over explicit values plus the collapsed fill block, so it is
    O(L) even for combinatorially large k. This is what makes the mechanism's
    range-dependence visible when the universe is padded: the fill block's
    weight share grows with k while every sampled run still looks perfect.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    rate = 0.5 * u.n * alpha
    vmax = order_stat(u, 1)
    if u.values is not None:
        weights = [math.exp(rate * (v - vmax)) for v in u.values]
        total = math.fsum(weights)
        return math.fsum(w * (vmax - v) for w, v in zip(weights, u.values)) / total
    weights = [math.exp(rate * (v - vmax)) for v in u.nonzeros]
    n_fill = u.k - len(u.nonzeros)
    w_fill = math.exp(rate * (u.fill - vmax)) if n_fill > 0 else 0.0
    total = math.fsum(weights) + n_fill * w_fill
    gap = math.fsum(w * (vmax - v) for w, v in zip(weights, u.nonzeros))
    gap += n_fill * w_fill * (vmax - u.fill)
    return gap / total
