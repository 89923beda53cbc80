"""Closed-form and solver-based quantities for erasure cascades.

Covers the end-to-end delay tail of a packet crossing ``r``
stop-and-wait erasure links, its lower/upper bounds, the information
velocity (the largest sustainable ratio ``r/N`` of links to slots), and
the large-deviation error exponents of the arrive-failure probability
for homogeneous, fixed-composition, and probabilistically drawn
cascades.

Conventions: natural logarithms throughout; ``alpha`` is the ratio
``r/N``; a queueing arrival rate ``lam`` rescales every erasure
probability to ``p / (1 - lam)`` (each packet in steady state behaves
as if alone on the slowed-down links).  Functions taking ``P, Q``
accept raw (untransformed) probabilities plus ``lam`` and apply the
rescaling internally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _slsqp
from scipy.special import gammaln, logsumexp, xlogy

from .model import (
    Explicit,
    FixedType,
    Homogeneous,
    LinkMode,
    LinkProfile,
    NonSimplexType,
    Probabilistic,
    _normalize_simplex,
    type_weights,
)

_EPS = float(np.finfo(float).eps)


class AnalyticError(ValueError):
    """Base class for analytic-domain failures."""


class AlphaAboveIV(AnalyticError):
    """alpha >= information velocity: the requested rate is unsustainable."""


class DegenerateR(AnalyticError):
    """The two-sided bounds need at least two links."""


class UnstableLambda(AnalyticError):
    """Some effective erasure probability p/(1-lam) reaches 1."""


class InfiniteVelocity(AnalyticError):
    """Every link is perfect and forwards in-slot; velocity is unbounded."""


class AllLinksPerfect(AnalyticError):
    """Zero erasure everywhere: failures are impossible, no exponent."""


class DegenerateChain(AnalyticError):
    """Both Gilbert-Elliott switching probabilities are zero."""


@dataclass(frozen=True)
class BoundsReport:
    """Exact delay-tail value and its closed-form bounds at one (r, N)."""

    r: int
    N: int
    p_eff: float
    exact: float
    lower: float
    chernoff_upper: float
    sum_upper: float


@dataclass(frozen=True)
class ExponentReport:
    """An error exponent together with the velocity and dual variable.

    ``dual_x`` is the tilt point of the underlying Chernoff
    optimization where applicable, else None.
    """

    alpha: float
    iv: float
    ee: float
    dual_x: float | None = None


def kl_binary(p: float, q: float) -> float:
    """KL divergence (nats) between Bernoulli(p) and Bernoulli(q).

    Uses the conventions 0 log 0 = 0 and log(x / 0) = +inf for x > 0,
    so boundary arguments return 0 or +inf rather than NaN.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"kl_binary arguments must lie in [0, 1], got {p!r}, {q!r}")
    terms = 0.0
    if p > 0.0:
        if q == 0.0:
            return math.inf
        terms += p * (math.log(p) - math.log(q))
    if p < 1.0:
        if q == 1.0:
            return math.inf
        # log1p keeps the complement term accurate near 0 and avoids the
        # quotient's rounding; a final clamp absorbs ulp-level negatives
        terms += (1.0 - p) * (math.log1p(-p) - math.log1p(-q))
    return terms if terms > 0.0 else 0.0


def exact_failure_prob(r: int, N: int, p: float) -> float:
    """Probability that ``r`` chained retransmitting links need more than ``N`` slots.

    Each link forwards after a geometric number of attempts (success
    probability ``1 - p``), one attempt per slot, so the total delay
    exceeds ``N`` exactly when ``N`` Bernoulli(1-p) trials contain
    fewer than ``r`` successes.  Evaluated as a log-domain cumulative
    binomial sum; all terms are positive, so there is no cancellation.
    """
    if r < 1 or N < 1:
        raise ValueError(f"need r >= 1 and N >= 1, got r={r}, N={N}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {p!r}")
    if N < r:
        return 1.0
    if p == 0.0:
        return 0.0
    k = np.arange(r, dtype=float)
    log_terms = (
        gammaln(N + 1.0)
        - gammaln(k + 1.0)
        - gammaln(N - k + 1.0)
        + k * math.log1p(-p)
        + (N - k) * math.log(p)
    )
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def failure_prob_bounds(r: int, N: int, p: float, lam: float = 0.0) -> BoundsReport:
    """Exact tail plus matching-exponent lower and upper bounds.

    The lower bound and the ``sum_upper`` bound share the exponent
    ``N * KL((r-1)/N || 1-p)`` and differ by polynomial factors; the
    Chernoff bound carries exponent ``(N-1) * KL(r/(N-1) || 1-p)``.
    ``sum_upper`` is clamped to 1.  Requires ``r >= 2`` and
    ``r/N < 1 - p_eff``.
    """
    if r < 2:
        raise DegenerateR(f"bounds require r >= 2, got r={r}")
    p_eff = _effective_p(p, lam, "p")
    if not 0.0 < p_eff < 1.0:
        raise ValueError(f"bounds require effective p in (0, 1), got {p_eff!r}")
    alpha = r / N
    if alpha >= 1.0 - p_eff:
        raise AlphaAboveIV(
            f"r/N = {alpha:.6g} must stay below 1 - p_eff = {1.0 - p_eff:.6g}"
        )
    exact = exact_failure_prob(r, N, p_eff)
    kl_low = kl_binary((r - 1) / N, 1.0 - p_eff)
    log_poly = math.log1p(-p_eff) + 0.5 * math.log(N)
    lower = math.exp(
        log_poly - N * kl_low - 0.5 * math.log(8.0 * (r - 1) * (N - r + 1))
    )
    chernoff_upper = math.exp(-(N - 1) * kl_binary(r / (N - 1), 1.0 - p_eff))
    if kl_low <= 0.0:
        sum_upper = 1.0
    else:
        log_sum = (
            log_poly
            - 0.5 * math.log(2.0 * math.pi * (r - 1) * (N - r + 1))
            - N * kl_low
            - math.log(-math.expm1(-kl_low))
        )
        sum_upper = min(1.0, math.exp(log_sum))
    return BoundsReport(r, N, p_eff, exact, lower, chernoff_upper, sum_upper)


def _effective_p(p: float, lam: float, what: str) -> float:
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"arrival rate must lie in [0, 1), got {lam!r}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"{what} must lie in [0, 1), got {p!r}")
    if lam == 0.0:
        return p
    p_eff = p / (1.0 - lam)
    if p_eff >= 1.0:
        raise UnstableLambda(
            f"effective erasure {what}/(1-lam) = {p_eff:.6g} reaches 1 (lam={lam!r})"
        )
    return p_eff


def effective_profile(profile: LinkProfile, lam: float) -> LinkProfile:
    """Rescale every erasure probability to ``p / (1 - lam)``.

    With ``lam == 0`` the profile is returned unchanged.  Raises
    UnstableLambda naming the first offending link or symbol.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"arrival rate must lie in [0, 1), got {lam!r}")
    if lam == 0.0:
        return profile
    scale = 1.0 / (1.0 - lam)

    def bump(p: float, where: str) -> float:
        p_eff = p * scale
        if p_eff >= 1.0:
            raise UnstableLambda(
                f"effective erasure at {where} is {p_eff:.6g} >= 1 for lam={lam!r}"
            )
        return p_eff

    if isinstance(profile, Homogeneous):
        return Homogeneous(bump(profile.p, "link 0"), profile.r)
    if isinstance(profile, Explicit):
        return Explicit(tuple(bump(p, f"link {i}") for i, p in enumerate(profile.p_seq)))
    if isinstance(profile, FixedType):
        P = tuple(bump(p, f"symbol {i}") for i, p in enumerate(profile.P))
        return FixedType(P, profile.Q, profile.r, profile.counts)
    P = tuple(bump(p, f"symbol {i}") for i, p in enumerate(profile.P))
    return Probabilistic(P, profile.Qtilde, profile.r)


def information_velocity(
    profile: LinkProfile, lam: float = 0.0, mode: LinkMode = LinkMode.DELAYED
) -> float:
    """Largest sustainable links-per-slot ratio of the cascade.

    Delayed forwarding: the harmonic mean of the per-link success
    probabilities under the type weights.  Instantaneous (in-slot)
    forwarding drops the one-slot hop floor, so velocities above 1 are
    possible and a perfect cascade has no finite velocity.
    """
    weights, P = type_weights(profile)
    support = [(w, _effective_p(p, lam, "erasure probability")) for w, p in zip(weights, P) if w > 0.0]
    if mode is LinkMode.DELAYED:
        if len(support) == 1:
            return 1.0 - support[0][1]
        return 1.0 / math.fsum(w / (1.0 - p) for w, p in support)
    if all(p == 0.0 for _, p in support):
        raise InfiniteVelocity("all links perfect with in-slot forwarding")
    if len(support) == 1:
        p = support[0][1]
        return (1.0 - p) / p
    return 1.0 / math.fsum(w * p / (1.0 - p) for w, p in support)


def ee_homogeneous(
    alpha: float, p: float, mode: LinkMode = LinkMode.DELAYED, lam: float = 0.0
) -> float:
    """Error exponent of a homogeneous cascade at links-per-slot ratio ``alpha``.

    Delayed mode gives ``KL(alpha || 1 - p_eff)``; instantaneous mode
    gives ``(1 + alpha) * KL(alpha / (1 + alpha) || 1 - p_eff)``.  As
    ``alpha -> 0`` both approach ``-ln p_eff``, the single-link slope.
    """
    p_eff = _effective_p(p, lam, "p")
    if p_eff == 0.0:
        raise AllLinksPerfect("p = 0 admits no failures, exponent undefined")
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if mode is LinkMode.DELAYED:
        iv = 1.0 - p_eff
        if alpha >= iv:
            raise AlphaAboveIV(f"alpha = {alpha!r} is not below the velocity {iv:.6g}")
        return kl_binary(alpha, 1.0 - p_eff)
    iv = (1.0 - p_eff) / p_eff
    if alpha >= iv:
        raise AlphaAboveIV(f"alpha = {alpha!r} is not below the velocity {iv:.6g}")
    return (1.0 + alpha) * kl_binary(alpha / (1.0 + alpha), 1.0 - p_eff)


def _support_arrays(
    P, W, alpha: float, lam: float, what: str
) -> tuple[np.ndarray, np.ndarray, float]:
    """Validate, rescale by lam, drop zero-weight symbols, compute velocity."""
    P = tuple(float(p) for p in P)
    W = tuple(float(w) for w in W)
    if len(P) != len(W) or len(P) == 0:
        raise ValueError(f"P and {what} must be equal nonzero lengths")
    W = _normalize_simplex(W, what)
    pairs = [
        (_effective_p(p, lam, f"P[{i}]"), w) for i, (p, w) in enumerate(zip(P, W)) if w > 0.0
    ]
    Ps = np.array([p for p, _ in pairs])
    Ws = np.array([w for _, w in pairs])
    iv = 1.0 / float(np.sum(Ws / (1.0 - Ps)))
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if alpha >= iv:
        raise AlphaAboveIV(f"alpha = {alpha!r} is not below the velocity {iv:.6g}")
    if float(Ps.max()) == 0.0:
        raise AllLinksPerfect("every supported symbol has zero erasure")
    return Ps, Ws, iv


def _upper_bracket(P: np.ndarray, W: np.ndarray, f) -> float:
    """Point just below the pole 1/max(P) where ``f`` has the far-side sign.

    ``f`` must diverge approaching the pole; the bracket is tightened
    geometrically if the initial offset is not close enough.
    """
    pole = 1.0 / float(P.max())
    gap = 1e-13 * pole
    for _ in range(40):
        hi = pole - gap
        if f(hi):
            return hi
        gap *= 0.125
        if gap < 4.0 * _EPS * pole:
            break
    return pole - gap


def ee_fixed_chernoff(alpha, P, Q, lam: float = 0.0) -> ExponentReport:
    """Exponent of a fixed-composition cascade via the tilted-mean equation.

    Bisects ``sum_i Q_i / (1 - P_i x) = 1 / alpha`` for ``x`` in
    ``(1, 1/max P)``, the interval where every geometric transform is
    finite, then evaluates
    ``(1 - alpha) ln x + alpha sum_i Q_i ln((1 - P_i x) / (1 - P_i))``.
    """
    Ps, Ws, iv = _support_arrays(P, Q, alpha, lam, "Q")

    def mean_eq(x: float) -> float:
        return float(np.sum(Ws / (1.0 - Ps * x))) - 1.0 / alpha

    lo = 1.0 + 4.0 * _EPS
    if mean_eq(lo) >= 0.0:
        x = lo
    else:
        hi = _upper_bracket(Ps, Ws, lambda x: mean_eq(x) > 0.0)
        x = _bisect(mean_eq, lo, hi)
    ee = (1.0 - alpha) * math.log(x) + alpha * float(
        np.sum(Ws * (np.log1p(-Ps * x) - np.log1p(-Ps)))
    )
    return ExponentReport(alpha, iv, ee, x)


def _bisect(f, lo: float, hi: float, iters: int = 200, xtol: float = 1e-13) -> float:
    """Root of increasing-sign ``f`` with f(lo) < 0 <= f(hi)."""
    for _ in range(iters):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _types_objective(a: np.ndarray, P: np.ndarray, U: np.ndarray) -> float:
    """Occupancy-weighted divergence cost, summed over symbols.

    Per symbol: ``U * KL(a/U || 1-P)`` written in its expanded
    cancellation-free form; xlogy supplies the 0 log 0 = 0 convention.
    """
    V = U - a
    return float(
        np.sum(xlogy(a, a) + xlogy(V, V) - xlogy(U, U) - xlogy(a, 1.0 - P) - xlogy(V, P))
    )


def _types_minimize(
    alpha: float,
    P: np.ndarray,
    W: np.ndarray,
    rel_tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Minimize the occupancy cost over slot-share vectors ``U``.

    ``U`` ranges over the simplex with ``U_i >= alpha W_i / (1 - P_i)``
    (each symbol class needs at least its mean share of slots).  At the
    optimum every free coordinate satisfies ``U_i = a_i / (1 - P_i t)``
    for one tilt ``t >= 1``, so the filled simplex pins ``t`` by a
    scalar bisection; a short pairwise-exchange polish then certifies
    stationarity from the primal side.  Zero-erasure symbols sit at
    their lower bound, where their cost is zero.
    """
    a = alpha * W
    L = a / (1.0 - P)
    slack = 1.0 - float(L.sum())
    free = np.flatnonzero(P > 0.0)
    if free.size == 0:
        raise AllLinksPerfect("every supported symbol has zero erasure")
    U = L.copy()
    if slack > 0.0:
        Pf, af = P[free], a[free]
        rhs = 1.0 - (float(a.sum()) - float(af.sum()))
        # plain-float evaluation: the solve runs hundreds of times per
        # exponent and numpy dispatch would dominate at these sizes
        pv, av = Pf.tolist(), af.tolist()

        def fill_gap(t: float) -> float:
            return math.fsum(ai / (1.0 - pi * t) for ai, pi in zip(av, pv)) - rhs

        T = 1.0 / float(Pf.max())
        hi = T * (1.0 - 1e-15)
        for k in range(1, 80):
            cand = T - (T - 1.0) * 0.5**k
            if fill_gap(cand) > 0.0:
                hi = cand
                break
        t = _bisect(fill_gap, 1.0, hi, iters=120, xtol=1e-16 * max(1.0, hi))
        U[free] = af / (1.0 - Pf * t)
        U[free] *= rhs / float(U[free].sum())

    logP = np.log(P[free])

    def grad() -> np.ndarray:
        return np.log1p(-a[free] / U[free]) - logP

    for _ in range(200):
        g = grad()
        i_loc = int(np.argmin(g))
        j_loc = int(np.argmax(g))
        spread = float(g[j_loc] - g[i_loc])
        value = _types_objective(a, P, U)
        if spread <= max(1e-13, rel_tol * abs(value)):
            break
        i, j = free[i_loc], free[j_loc]
        d_max = U[j] - L[j]
        if d_max <= 0.0:
            break

        def dir_deriv(d: float) -> float:
            gi = math.log1p(-a[i] / (U[i] + d)) - math.log(P[i])
            gj = math.log1p(-a[j] / (U[j] - d)) - math.log(P[j])
            return gi - gj

        step = _bisect(dir_deriv, 0.0, d_max, iters=100, xtol=1e-17 * max(1.0, d_max))
        if step <= 0.0:
            break
        U[i] += step
        U[j] -= step
    return _types_objective(a, P, U), U


def ee_fixed_types(alpha, P, Q, lam: float = 0.0) -> float:
    """Exponent of a fixed-composition cascade by direct minimization.

    Minimizes ``sum_i U_i KL(alpha Q_i / U_i || 1 - P_i)`` over
    slot-share vectors ``U`` as in :func:`_types_minimize`.  Symbols
    with ``Q_i = 0`` are excluded (they hold no links, so they can
    consume no slots).  Agrees with :func:`ee_fixed_chernoff` and
    serves as its independent cross-check.
    """
    Ps, Ws, _ = _support_arrays(P, Q, alpha, lam, "Q")
    value, _ = _types_minimize(alpha, Ps, Ws)
    return value


def ee_prob_chernoff(alpha, P, Qtilde, lam: float = 0.0) -> ExponentReport:
    """Exponent when each link's symbol is drawn i.i.d. from ``Qtilde``.

    Locates the stationary point of
    ``(1 - alpha) ln x - alpha ln sum_i Qtilde_i (1 - P_i) / (1 - P_i x)``
    on ``(1, 1/max P)`` by a sign-bracket scan plus bisection of
    ``sum_i Qtilde_i (1 - P_i)(1 - alpha - P_i x) / (1 - P_i x)^2``.
    """
    Ps, Ws, iv = _support_arrays(P, Qtilde, alpha, lam, "Qtilde")

    def stationarity(x: float) -> float:
        denom = 1.0 - Ps * x
        return float(np.sum(Ws * (1.0 - Ps) * (1.0 - alpha - Ps * x) / (denom * denom)))

    def objective(x: float) -> float:
        mgf = float(np.sum(Ws * (1.0 - Ps) / (1.0 - Ps * x)))
        return (1.0 - alpha) * math.log(x) - alpha * math.log(mgf)

    lo = 1.0 + 4.0 * _EPS
    hi = _upper_bracket(Ps, Ws, lambda x: stationarity(x) < 0.0)
    xs = np.linspace(lo, hi, 1025)
    vals = np.array([stationarity(float(x)) for x in xs])
    best_x, best_ee = None, -math.inf
    for k in range(len(xs) - 1):
        if vals[k] > 0.0 >= vals[k + 1]:
            root = _bisect(lambda x: -stationarity(x), float(xs[k]), float(xs[k + 1]))
            ee = objective(root)
            if ee > best_ee:
                best_x, best_ee = root, ee
    if best_x is None:
        # alpha so close to the velocity that the root sits against x = 1
        best_x, best_ee = lo, objective(lo)
    return ExponentReport(alpha, iv, best_ee, best_x)


def _prob_types_objective(
    alpha: float, P: np.ndarray, Wt: np.ndarray, Q: np.ndarray
) -> tuple[float, np.ndarray]:
    inner, U = _types_minimize(alpha, P, Q)
    kl = float(np.sum(xlogy(Q, Q / Wt)))
    return inner + alpha * kl, U


def _prob_envelope_grad(
    alpha: float, Ps: np.ndarray, Ws: np.ndarray, Q: np.ndarray, U: np.ndarray
) -> np.ndarray:
    aq = alpha * Q
    return alpha * (
        np.log(aq) - np.log(U - aq) + np.log(Ps) - np.log1p(-Ps) + np.log(Q / Ws) + 1.0
    )


def _prob_exchange_descent(
    alpha: float,
    Ps: np.ndarray,
    Ws: np.ndarray,
    Q: np.ndarray,
    U: np.ndarray,
    value: float,
    max_steps: int,
    numeric: bool,
) -> float:
    """Pairwise-exchange descent over compositions with exact line search.

    Each step moves mass between the extreme-gradient coordinates, with
    the step capped so the composition keeps a velocity above ``alpha``
    (the inner slot problem stays feasible).  Gradients come from the
    inner optimum (envelope theorem); with zero-erasure symbols present
    the envelope form is singular, so central differences stand in.
    """
    inv_rate = 1.0 / (1.0 - Ps)
    budget = 1.0 / alpha

    def dir_deriv(Q: np.ndarray, i: int, j: int, d: float) -> float:
        trial = Q.copy()
        trial[i] += d
        trial[j] -= d
        if numeric:
            h = 1e-7
            f_plus, _ = _prob_types_objective(alpha, Ps, Ws, _shift(trial, i, j, h))
            f_minus, _ = _prob_types_objective(alpha, Ps, Ws, _shift(trial, i, j, -h))
            return (f_plus - f_minus) / (2.0 * h)
        _, U_trial = _prob_types_objective(alpha, Ps, Ws, trial)
        g = _prob_envelope_grad(alpha, Ps, Ws, trial, U_trial)
        return float(g[i] - g[j])

    for _ in range(max_steps):
        if numeric:
            g = np.array(
                [dir_deriv(Q, k, int(np.argmax(Q)), 0.0) for k in range(len(Q))]
            )
        else:
            g = _prob_envelope_grad(alpha, Ps, Ws, Q, U)
        i = int(np.argmin(g))
        j = int(np.argmax(g))
        spread = float(g[j] - g[i])
        if spread <= max(1e-10, 1e-9 * abs(value)):
            break
        d_max = Q[j] * (1.0 - 1e-12)
        drift = inv_rate[i] - inv_rate[j]
        if drift > 0.0:
            room = budget * (1.0 - 1e-12) - float(np.dot(Q, inv_rate))
            if room <= 0.0:
                break
            d_max = min(d_max, room / drift)
        step = _bisect(
            lambda d: dir_deriv(Q, i, j, d), 0.0, d_max, iters=60, xtol=1e-14
        )
        if step <= 0.0:
            break
        Q[i] += step
        Q[j] -= step
        value, U = _prob_types_objective(alpha, Ps, Ws, Q)
    return value


def ee_prob_types(alpha, P, Qtilde, lam: float = 0.0) -> float:
    """Probabilistic-cascade exponent by explicit composition search.

    Minimizes ``ee_fixed_types(alpha, P, Q) + alpha * KL(Q || Qtilde)``
    over compositions ``Q`` on the support of ``Qtilde``.  The search
    runs SLSQP on the simplex with gradients from the inner slot-share
    optimum (envelope theorem) and a linear cap keeping the composition
    velocity above ``alpha``, then polishes with a few pairwise-exchange
    steps.  Zero-erasure symbols make the envelope form singular, so
    that case falls back to the exchange descent with numerical
    gradients.  Cross-checks :func:`ee_prob_chernoff`.
    """
    Ps, Ws, _ = _support_arrays(P, Qtilde, alpha, lam, "Qtilde")
    if len(Ps) == 1:
        value, _ = _types_minimize(alpha, Ps, np.array([1.0]))
        return value
    numeric = bool((Ps == 0.0).any())

    Q = Ws.copy()
    value, U = _prob_types_objective(alpha, Ps, Ws, Q)
    if numeric:
        return _prob_exchange_descent(alpha, Ps, Ws, Q, U, value, 300, True)

    inv_rate = 1.0 / (1.0 - Ps)
    memo: dict = {"key": None, "value": None, "U": None}

    def solve(x: np.ndarray):
        key = x.tobytes()
        if memo["key"] != key:
            value_x, U_x = _prob_types_objective(alpha, Ps, Ws, x)
            memo.update(key=key, value=value_x, U=U_x)
        return memo["value"], memo["U"]

    def objective(x: np.ndarray) -> float:
        return solve(np.asarray(x, dtype=float))[0]

    def gradient(x: np.ndarray) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        _, U_x = solve(xv)
        return _prob_envelope_grad(alpha, Ps, Ws, xv, U_x)

    # both constraints are linear, so SLSQP iterates remain feasible
    # and the inner problem is solvable at every evaluation point
    constraints = [
        {"type": "eq", "fun": lambda x: float(x.sum()) - 1.0, "jac": lambda x: np.ones_like(x)},
        {
            "type": "ineq",
            "fun": lambda x: (1.0 - 1e-9) / alpha - float(np.dot(x, inv_rate)),
            "jac": lambda x: -inv_rate,
        },
    ]
    if float(np.dot(Q, inv_rate)) < (1.0 - 1e-9) / alpha:
        with warnings.catch_warnings():
            # SLSQP's line search may poke one ulp outside the box and
            # warn while clipping; the clipped point is what we want
            warnings.simplefilter("ignore", RuntimeWarning)
            res = _slsqp(
                objective,
                Q,
                jac=gradient,
                method="SLSQP",
                bounds=[(1e-12, 1.0)] * len(Ps),
                constraints=constraints,
                options={"maxiter": 300, "ftol": 1e-14},
            )
        candidate = np.clip(np.asarray(res.x, dtype=float), 1e-12, None)
        candidate /= candidate.sum()
        if float(np.dot(candidate, inv_rate)) < (1.0 - 1e-10) / alpha:
            cand_value, cand_U = _prob_types_objective(alpha, Ps, Ws, candidate)
            if cand_value <= value:
                Q, value, U = candidate, cand_value, cand_U
    return _prob_exchange_descent(alpha, Ps, Ws, Q, U, value, 30, False)


def _shift(Q: np.ndarray, i: int, j: int, h: float) -> np.ndarray:
    out = Q.copy()
    out[i] += h
    out[j] -= h
    return out


def ge_stationary_rate(gamma: float, beta: float, epsilon: float) -> float:
    """Long-run arrival rate of the two-state modulated process.

    The chain spends fraction ``beta / (beta + gamma)`` of slots in the
    good state (arrival probability ``epsilon``) and the rest in the
    bad state (arrival probability 1).
    """
    for name, v in (("gamma", gamma), ("beta", beta), ("epsilon", epsilon)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
    if gamma + beta == 0.0:
        raise DegenerateChain("gamma = beta = 0 has no unique stationary state")
    return (beta * epsilon + gamma) / (beta + gamma)


def no_feedback_error_prob(pe: float, M: int) -> float:
    """Error probability over an ``M``-ary message set without feedback.

    A decoding failure is only an error when the guess is wrong, which
    removes a ``1/M`` fraction: ``(1 - 1/M) * pe``.
    """
    if not 0.0 <= pe <= 1.0:
        raise ValueError(f"pe must lie in [0, 1], got {pe!r}")
    if M < 1:
        raise ValueError(f"message count must be >= 1, got {M!r}")
    return (1.0 - 1.0 / M) * pe


def exponent_report(
    profile: LinkProfile,
    alpha: float,
    lam: float = 0.0,
    mode: LinkMode = LinkMode.DELAYED,
    form: str = "chernoff",
) -> ExponentReport:
    """Profile-level exponent dispatcher used by the CLI and sweeps.

    Picks the fixed-composition solvers for Homogeneous, Explicit, and
    FixedType profiles and the probabilistic solvers for Probabilistic
    ones.  In-slot forwarding reuses the delayed solver through the
    index shift ``E_inst(alpha) = (1+alpha) E_del(alpha/(1+alpha))``
    (``N`` free slots correspond to ``N + r`` one-per-slot hops).
    """
    if form not in ("chernoff", "types"):
        raise ValueError(f"form must be 'chernoff' or 'types', got {form!r}")
    weights, P = type_weights(profile)
    probabilistic = isinstance(profile, Probabilistic)
    if mode is LinkMode.INSTANTANEOUS:
        iv = information_velocity(profile, lam, mode)
        if not 0.0 < alpha < iv:
            raise AlphaAboveIV(f"alpha = {alpha!r} is not below the velocity {iv:.6g}")
        inner = exponent_report(profile, alpha / (1.0 + alpha), lam, LinkMode.DELAYED, form)
        return ExponentReport(alpha, iv, (1.0 + alpha) * inner.ee, inner.dual_x)
    if probabilistic:
        rep = ee_prob_chernoff(alpha, P, weights, lam)
        if form == "types":
            return ExponentReport(alpha, rep.iv, ee_prob_types(alpha, P, weights, lam), None)
        return rep
    rep = ee_fixed_chernoff(alpha, P, weights, lam)
    if form == "types":
        return ExponentReport(alpha, rep.iv, ee_fixed_types(alpha, P, weights, lam), None)
    return rep


__all__ = [
    "AnalyticError",
    "AlphaAboveIV",
    "AllLinksPerfect",
    "BoundsReport",
    "DegenerateChain",
    "DegenerateR",
    "ExponentReport",
    "InfiniteVelocity",
    "NonSimplexType",
    "UnstableLambda",
    "ee_fixed_chernoff",
    "ee_fixed_types",
    "ee_homogeneous",
    "ee_prob_chernoff",
    "ee_prob_types",
    "effective_profile",
    "exact_failure_prob",
    "exponent_report",
    "failure_prob_bounds",
    "ge_stationary_rate",
    "information_velocity",
    "kl_binary",
    "no_feedback_error_prob",
]
