"""Independent oracles the tests check the library against.

Everything here is computed from first principles (direct normalization,
closed-form CDFs, grid quadrature, high-precision arithmetic) without
touching the library's sampling or weighting code paths.
"""

import math
from decimal import Decimal, getcontext


def exact_selection_weights(values, n, alpha, support=None):
    """Directly normalized exp(n*alpha*f/2) probabilities, 1-based ids.

    Plain exponentials, no max subtraction: only valid when n*alpha*f/2 stays
    inside float range, which the K <= 6 oracle instances guarantee.
    """
    ids = list(support) if support is not None else list(range(1, len(values) + 1))
    ws = {i: math.exp(0.5 * n * alpha * values[i - 1]) for i in ids}
    total = math.fsum(ws.values())
    return {i: w / total for i, w in ws.items()}


def tv_distance(p, q):
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def laplace_cdf(x, scale):
    if x < 0:
        return 0.5 * math.exp(x / scale)
    return 1.0 - 0.5 * math.exp(-x / scale)


def laplace_pdf(x, scale):
    return math.exp(-abs(x) / scale) / (2.0 * scale)


def laplace_diff_tail(t, scale, grid=200001, span=60.0):
    """P(X2 - X1 > t) for iid Laplace(scale) by trapezoidal quadrature:
    integral of pdf(x) * (1 - CDF(x + t)) dx over a wide grid."""
    lo, hi = -span * scale, span * scale
    step = (hi - lo) / (grid - 1)
    acc = 0.0
    for j in range(grid):
        x = lo + j * step
        w = 0.5 if j in (0, grid - 1) else 1.0
        acc += w * laplace_pdf(x, scale) * (1.0 - laplace_cdf(x + t, scale))
    return acc * step


def thresholds_highprec(n, alpha, delta, r):
    """The rank-r threshold pair evaluated at 50 significant digits."""
    getcontext().prec = 50
    n_d, a_d, d_d, r_d = Decimal(n), Decimal(repr(alpha)), Decimal(repr(delta)), Decimal(r)
    t = (6 / n_d) * (1 + (3 * r_d / d_d).ln() / a_d)
    na = n_d * a_d
    T = (
        (3 / na) * (3 / (2 * d_d)).ln()
        + (6 / na) * (3 / d_d).ln()
        + (12 / na) * (3 * r_d * (r_d + 1) / d_d).ln()
        + t
    )
    return float(t), float(T)


def hoeffding(trials, confidence=0.999):
    """Two-sided Hoeffding deviation bound used for test-side slack."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))


class FixedSource:
    """Duck-typed noise source replaying a fixed uniform sequence."""

    zero_override = False

    def __init__(self, uniforms):
        self._uniforms = list(uniforms)
        self._pos = 0

    def uniform(self):
        u = self._uniforms[self._pos]
        self._pos += 1
        return u

    def laplace(self, scale):
        from privmax.noise import sample_laplace

        return sample_laplace(scale, self)


class RecordingSource:
    """Wraps a real source and records the scale of every Laplace draw and
    the count of raw uniform draws."""

    def __init__(self, inner):
        self._inner = inner
        self.zero_override = inner.zero_override
        self.laplace_scales = []
        self.uniform_draws = 0

    def uniform(self):
        self.uniform_draws += 1
        return self._inner.uniform()

    def laplace(self, scale):
        self.laplace_scales.append(scale)
        from privmax.noise import sample_laplace

        return sample_laplace(scale, self._inner)
