"""Discrete-time simulator for cascades of retransmitting erasure links.

Slot semantics (delayed forwarding): in each slot, newly arriving
packets join node 1's queue, then every node with a nonempty queue
attempts its head-of-line packet over its link, succeeding with
probability ``1 - p_j``.  A success in slot ``t`` moves the packet to
the next node's queue at ``t + 1``, which is also when the next queued
packet becomes transmittable; delivery time ``B`` is the slot after
the last link's success.  Instantaneous forwarding differs only in
that a success is transmittable by the next node within the same slot
(a packet can cross several hops per slot) and ``B`` is the final
success slot itself.

Under these rules the per-(packet, link) service draws are independent
shifted geometrics ``G``, and the slot after packet ``i`` clears link
``j`` satisfies ``F[i][j] = max(F[i][j-1], F[i-1][j]) + G[i][j]`` with
``F[i][0]`` the arrival slot.  The simulator evaluates this recursion
node by node, vectorized over packets (a running maximum over prefix
sums), which reproduces the slot dynamics exactly while touching each
(packet, link) pair once.  Instantaneous delivery is the same lattice
shifted down by one slot per hop.

Randomness comes from counter-based Philox streams keyed by
``(seed, stream_id)``, one stream per role (arrivals, link profile
draw, each node's services), so runs are reproducible bit for bit and
independent replications merge deterministically in block order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import chi2 as _chi2

from .analytic import DegenerateChain, InfiniteVelocity, UnstableLambda
from .model import (
    ArrivalSpec,
    Deterministic,
    Geometric,
    GilbertElliott,
    Homogeneous,
    LinkMode,
    LinkProfile,
    Probabilistic,
    Scenario,
    SinglePacket,
    VelocityDefinition,
    link_sequence,
    validate_scenario,
)

_Z_95 = 1.959963984540054

_PURPOSE_PROFILE = 0
_PURPOSE_ARRIVAL = 1
_PURPOSE_NODE = 2
_PURPOSE_VELOCITY = 3

_MASK64 = (1 << 64) - 1


class SimError(ValueError):
    """Base class for simulation-domain failures."""


class EmptyTrace(SimError):
    """No recorded packets to aggregate."""


class InsufficientSamples(SimError):
    """Too few post-warmup samples for a stable statistical fit."""


@dataclass(frozen=True)
class RngStream:
    """A named, counter-based random stream.

    Streams with distinct ``(seed, stream_id)`` keys are statistically
    independent, and a stream always replays the same sequence, so any
    scheduling of replications yields identical results.
    """

    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def stream_for(seed: int, purpose: int, index: int = 0, replication: int = 0) -> RngStream:
    if not 0 <= index < (1 << 28):
        raise ValueError(f"stream index out of range: {index}")
    if not 0 <= replication < (1 << 32):
        raise ValueError(f"replication index out of range: {replication}")
    sid = (replication << 32) | (purpose << 28) | index
    return RngStream(seed & _MASK64, sid)


@dataclass(frozen=True)
class TraceStats:
    """Recorded outcome of one simulation run.

    ``packet_records`` is an ``(n, 2)`` array of ``(A, B)`` arrival and
    delivery slots for the post-warmup packets, in arrival order.
    ``node_waits[j]`` holds the same packets' waiting times at node
    ``j`` (0-based), from becoming available there to clearing its
    link; the per-packet waits sum to ``B - A`` in delayed mode and to
    ``B - A`` plus one per hop in instantaneous mode (in-slot hops can
    take zero slots).
    """

    packet_records: np.ndarray
    node_waits: list[np.ndarray]
    horizon_slots: int
    dropped_warmup: int

    @property
    def arrivals(self) -> np.ndarray:
        return self.packet_records[:, 0]

    @property
    def departures(self) -> np.ndarray:
        return self.packet_records[:, 1]

    @property
    def delays(self) -> np.ndarray:
        return self.packet_records[:, 1] - self.packet_records[:, 0]


def initial_arrival_state(spec: ArrivalSpec, rng: np.random.Generator):
    """Starting state for :func:`next_arrival`.

    Gilbert-Elliott chains start from their stationary distribution,
    which consumes one uniform draw.
    """
    if isinstance(spec, GilbertElliott):
        if spec.gamma + spec.beta == 0.0:
            raise DegenerateChain("gamma = beta = 0 has no unique stationary state")
        good = rng.random() < spec.beta / (spec.beta + spec.gamma)
        return 0 if good else 1
    if isinstance(spec, Deterministic):
        return 0
    if isinstance(spec, SinglePacket):
        return False
    return None


def next_arrival(spec: ArrivalSpec, state, rng: np.random.Generator):
    """Return ``(slots_until_next_arrival, new_state)``."""
    if isinstance(spec, Geometric):
        return int(rng.geometric(spec.lam)), state
    if isinstance(spec, Deterministic):
        i = int(state)
        gap = int((i + 1) * spec.a) - int(i * spec.a)
        return gap, i + 1
    if isinstance(spec, GilbertElliott):
        good = state == 0
        gap = 0
        while True:
            gap += 1
            emit_p = spec.epsilon if good else 1.0
            emitted = emit_p >= 1.0 or rng.random() < emit_p
            if good:
                good = not (spec.gamma > 0.0 and rng.random() < spec.gamma)
            else:
                good = spec.beta > 0.0 and rng.random() < spec.beta
            if emitted:
                return gap, 0 if good else 1
            if gap > 10_000_000:
                raise SimError("arrival process produced no packet in 1e7 slots")
    if isinstance(spec, SinglePacket):
        if state:
            raise SimError("single-packet process has already emitted its packet")
        return 1, True
    raise SimError(f"unknown arrival spec {type(spec).__name__}")


def _ge_bulk(spec: GilbertElliott, n: int, rng: np.random.Generator) -> np.ndarray:
    gamma, beta, eps = spec.gamma, spec.beta, spec.epsilon
    if gamma + beta == 0.0:
        raise DegenerateChain("gamma = beta = 0 has no unique stationary state")
    good = rng.random() < beta / (beta + gamma)
    if gamma == 0.0 and eps == 0.0 and good:
        raise SimError("absorbed in the good state with zero emission probability")
    chunk = 1 << 16
    out = np.empty(n, dtype=np.int64)
    got = 0
    slot = 0
    while got < n:
        if good:
            length = int(rng.geometric(gamma)) if gamma > 0.0 else chunk
            hits = np.empty(0, dtype=np.int64)
            if eps >= 1.0:
                hits = slot + 1 + np.arange(length, dtype=np.int64)
            elif eps > 0.0:
                hits = slot + 1 + np.flatnonzero(rng.random(length) < eps).astype(np.int64)
            good = gamma <= 0.0
        else:
            length = int(rng.geometric(beta)) if beta > 0.0 else chunk
            hits = slot + 1 + np.arange(length, dtype=np.int64)
            good = beta > 0.0
        slot += length
        take = min(len(hits), n - got)
        out[got : got + take] = hits[:take]
        got += take
    return out


def generate_arrivals(spec: ArrivalSpec, n: int, stream: RngStream) -> np.ndarray:
    """Arrival slots of the first ``n`` packets (1-based slots, ascending)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = stream.generator()
    if isinstance(spec, SinglePacket):
        if n != 1:
            raise SimError("single-packet scenarios hold exactly one packet")
        return np.array([1], dtype=np.int64)
    if isinstance(spec, Geometric):
        return rng.geometric(spec.lam, size=n).astype(np.int64).cumsum()
    if isinstance(spec, Deterministic):
        a: Fraction = spec.a
        num, den = a.numerator, a.denominator
        if n * num < (1 << 62):
            i = np.arange(1, n + 1, dtype=np.int64)
            return (i * num) // den
        return np.array([int(i * a) for i in range(1, n + 1)], dtype=np.int64)
    if isinstance(spec, GilbertElliott):
        return _ge_bulk(spec, n, rng)
    raise SimError(f"unknown arrival spec {type(spec).__name__}")


def materialize_links(profile: LinkProfile, stream: RngStream) -> np.ndarray:
    """Per-link erasure probabilities for one replication.

    Probabilistic profiles draw their symbol sequence here; the other
    profile kinds are deterministic.
    """
    if isinstance(profile, Probabilistic):
        rng = stream.generator()
        symbols = rng.choice(len(profile.P), size=profile.r, p=np.array(profile.Qtilde))
        return np.array(profile.P)[symbols]
    return np.array(link_sequence(profile))


def _advance_node(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """One node of the tandem recursion, vectorized over packets.

    Unrolling ``F'[i] = max(F[i], F'[i-1]) + G[i]`` over packets gives
    ``F'[i] = S[i] + max_{k<=i}(F[k] - S[k-1])`` with ``S`` the prefix
    sums of ``G``, a running maximum.
    """
    S = np.cumsum(G)
    H = F - S + G
    np.maximum.accumulate(H, out=H)
    return S + H


def simulate_tandem(scenario: Scenario, collect_waits: bool = True) -> TraceStats:
    """Run one replication of the cascade and record post-warmup packets.

    ``collect_waits=False`` skips per-node waiting-time storage, which
    matters for large ``r`` times large packet counts.
    """
    sc = validate_scenario(scenario)
    if isinstance(sc.arrivals, SinglePacket) and sc.num_packets != 1:
        raise SimError(
            "single-packet scenarios simulate one packet; "
            "replicated estimators interpret num_packets as a replication count"
        )
    p_seq = materialize_links(sc.profile, stream_for(sc.seed, _PURPOSE_PROFILE))
    arrivals = generate_arrivals(sc.arrivals, sc.num_packets, stream_for(sc.seed, _PURPOSE_ARRIVAL))
    warm = sc.warmup_packets or 0
    F = arrivals.copy()
    waits: list[np.ndarray] = []
    for j, pj in enumerate(p_seq):
        rng = stream_for(sc.seed, _PURPOSE_NODE, index=j).generator()
        G = rng.geometric(1.0 - float(pj), size=sc.num_packets)
        F_next = _advance_node(F, G)
        if collect_waits:
            w = F_next - F
            if sc.mode is LinkMode.INSTANTANEOUS:
                w = w - 1
            waits.append(w[warm:])
        F = F_next
    departures = F if sc.mode is LinkMode.DELAYED else F - len(p_seq)
    records = np.stack([arrivals, departures], axis=1)[warm:]
    return TraceStats(
        packet_records=records,
        node_waits=waits,
        horizon_slots=int(departures[-1]),
        dropped_warmup=warm,
    )


def empirical_failure_ratio(stats: TraceStats, N: int) -> tuple[float, tuple[float, float]]:
    """Fraction of recorded packets with ``B - A > N``, with a 95% CI.

    The interval is the normal approximation ``ratio +/- 1.96 se`` with
    the binomial standard error, clipped to [0, 1].
    """
    n = len(stats.packet_records)
    if n == 0:
        raise EmptyTrace("no recorded packets")
    ratio = float(np.count_nonzero(stats.delays > N)) / n
    se = math.sqrt(ratio * (1.0 - ratio) / n)
    return ratio, (max(0.0, ratio - _Z_95 * se), min(1.0, ratio + _Z_95 * se))


@dataclass(frozen=True)
class WaitingFit:
    """Goodness of fit of one node's waiting times to a geometric law."""

    empirical_mean: float
    theoretical_mean: float
    chi2_stat: float
    dof: int
    p_value: float
    samples: int


def fit_waiting_geometric(stats: TraceStats, node: int, p: float, lam: float) -> WaitingFit:
    """Compare node ``node``'s waits to Geometric(1 - p/(1 - lam)).

    In steady state each packet's wait at a stable node (queueing plus
    service) is geometric with that success probability, mean
    ``(1 - lam) / (1 - lam - p)``.  The chi-square statistic uses unit
    bins with the tail merged below an expected count of 5.
    """
    waits = stats.node_waits[node]
    n = len(waits)
    if n < 10_000:
        raise InsufficientSamples(f"need at least 10000 samples, have {n}")
    p_eff = p / (1.0 - lam)
    if p_eff >= 1.0:
        raise UnstableLambda(f"p/(1-lam) = {p_eff:.6g} reaches 1; no steady state")
    q = 1.0 - p_eff
    counts = np.bincount(waits.astype(np.int64))[1:]  # index 0 <-> wait 1
    k_max = len(counts)
    expected = n * q * (1.0 - q) ** np.arange(k_max)
    tail_expected = float(n * (1.0 - q) ** k_max)
    obs = list(counts.astype(float)) + [0.0]
    exp = list(expected) + [tail_expected]
    while len(exp) > 1 and exp[-1] < 5.0:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        del exp[-1], obs[-1]
    obs_arr = np.array(obs)
    exp_arr = np.array(exp)
    stat = float(np.sum((obs_arr - exp_arr) ** 2 / exp_arr))
    dof = len(exp_arr) - 1
    p_value = float(_chi2.sf(stat, dof)) if dof >= 1 else 1.0
    return WaitingFit(
        empirical_mean=float(waits.mean()),
        theoretical_mean=1.0 / q,
        chi2_stat=stat,
        dof=dof,
        p_value=p_value,
        samples=n,
    )


def waiting_independence(stats: TraceStats) -> np.ndarray:
    """Pairwise correlations between per-node waiting-time sequences.

    Returns an ``r x r`` matrix; pairs involving a constant sequence
    are reported as 0 by convention.
    """
    r = len(stats.node_waits)
    if r == 0:
        raise EmptyTrace("no node waits collected")
    n = len(stats.node_waits[0])
    if n < 10_000:
        raise InsufficientSamples(f"need at least 10000 samples, have {n}")
    W = np.stack([w.astype(float) for w in stats.node_waits])
    W -= W.mean(axis=1, keepdims=True)
    sd = np.sqrt((W**2).mean(axis=1))
    out = np.eye(r)
    for i in range(r):
        for j in range(i + 1, r):
            if sd[i] == 0.0 or sd[j] == 0.0:
                c = 0.0
            else:
                c = float((W[i] * W[j]).mean() / (sd[i] * sd[j]))
            out[i, j] = out[j, i] = c
    return out


def single_packet_delays(
    profile: LinkProfile, mode: LinkMode, replications: int, seed: int
) -> np.ndarray:
    """End-to-end delays ``B - A`` of independent single-packet runs.

    A lone packet never queues, so its delay is the sum of per-link
    service draws (minus one slot per hop under in-slot forwarding).
    Replications are processed in fixed-size blocks, one stream per
    block, so results do not depend on scheduling.
    """
    if replications < 1:
        raise ValueError(f"need replications >= 1, got {replications}")
    r = profile.r
    block = max(1, min(1 << 16, 8_000_000 // max(1, r)))
    out = np.empty(replications, dtype=np.int64)
    got = 0
    b = 0
    P = np.array(getattr(profile, "P", ()), dtype=float)
    while got < replications:
        m = min(block, replications - got)
        service = stream_for(seed, _PURPOSE_NODE, replication=b).generator()
        if isinstance(profile, Probabilistic):
            prof_rng = stream_for(seed, _PURPOSE_PROFILE, replication=b).generator()
            symbols = prof_rng.choice(len(P), size=(m, r), p=np.array(profile.Qtilde))
            G = service.geometric(1.0 - P[symbols])
        elif isinstance(profile, Homogeneous):
            G = service.geometric(1.0 - profile.p, size=(m, r))
        else:
            p_row = np.array(link_sequence(profile))
            G = service.geometric(1.0 - p_row, size=(m, r))
        delays = G.sum(axis=1)
        if mode is LinkMode.INSTANTANEOUS:
            delays = delays - r
        out[got : got + m] = delays
        got += m
        b += 1
    return out


def empirical_velocity(
    scenario: Scenario, budget_N: int, definition: VelocityDefinition
) -> float:
    """Monte Carlo velocity of a single-packet cascade.

    ``SLOTS_PER_HOP`` runs the whole cascade per replication and
    returns ``r / mean(B - A)``.  ``HOPS_PER_SLOT`` counts links
    crossed within ``budget_N`` slots and returns the mean divided by
    the budget; the cascade must be long enough not to run out of
    links (automatic for homogeneous profiles).  The scenario's
    ``num_packets`` is read as the replication count.
    """
    sc = validate_scenario(scenario)
    if not isinstance(sc.arrivals, SinglePacket):
        raise SimError("velocity estimators are defined for single-packet scenarios")
    reps = sc.num_packets
    if definition is VelocityDefinition.SLOTS_PER_HOP:
        delays = single_packet_delays(sc.profile, sc.mode, reps, sc.seed)
        return sc.profile.r / float(delays.mean())
    if budget_N < 1:
        raise ValueError(f"need budget_N >= 1, got {budget_N}")
    homogeneous = isinstance(sc.profile, Homogeneous)
    if homogeneous:
        p_of = None
        p_const = sc.profile.p
        if sc.mode is LinkMode.INSTANTANEOUS and p_const == 0.0:
            raise InfiniteVelocity("all links perfect with in-slot forwarding")
    else:
        p_seq = np.array(link_sequence(sc.profile))
        if sc.mode is LinkMode.DELAYED and len(p_seq) < budget_N:
            raise SimError(
                f"cascade of {len(p_seq)} links can be exhausted within {budget_N} slots"
            )
        p_of = lambda h: p_seq[h]
        p_const = None
    rng = stream_for(sc.seed, _PURPOSE_VELOCITY).generator()
    hops = np.zeros(reps, dtype=np.int64)
    for _ in range(budget_N):
        if sc.mode is LinkMode.DELAYED:
            p_now = p_const if homogeneous else p_of(hops)
            hops += rng.random(reps) >= p_now
        else:
            active = np.ones(reps, dtype=bool)
            while active.any():
                idx = np.flatnonzero(active)
                if not homogeneous:
                    exhausted = hops[idx] >= len(p_seq)
                    if exhausted.any():
                        raise SimError("cascade exhausted; provide a longer profile")
                p_now = p_const if homogeneous else p_of(hops[idx])
                success = rng.random(len(idx)) >= p_now
                hops[idx[success]] += 1
                active[idx[~success]] = False
    return float(hops.mean()) / budget_N


def failure_curve_crossing(delays: np.ndarray, r: int, level: float = 0.5) -> float:
    """Links-per-slot ratio at which the empirical tail crosses ``level``.

    Evaluates the survival function of the delays on integer slot
    budgets ``N`` and linearly interpolates the crossing in the
    ``alpha = r / N`` coordinate.
    """
    if len(delays) == 0:
        raise EmptyTrace("no delays to analyze")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    n = len(delays)
    sorted_d = np.sort(delays)
    lo_N = max(int(sorted_d[0]) - 1, 1)
    hi_N = int(sorted_d[-1])

    def survival(N: int) -> float:
        return 1.0 - np.searchsorted(sorted_d, N, side="right") / n

    prev_N, prev_S = lo_N, survival(lo_N)
    if prev_S < level:
        raise SimError(f"survival already below {level} at N = {lo_N}")
    for N in range(lo_N + 1, hi_N + 1):
        S = survival(N)
        if prev_S >= level > S:
            a_hi, a_lo = r / prev_N, r / N
            if prev_S == S:
                return a_lo
            frac = (prev_S - level) / (prev_S - S)
            return a_hi + frac * (a_lo - a_hi)
        prev_N, prev_S = N, S
    raise SimError(f"survival curve never crosses {level}")


__all__ = [
    "EmptyTrace",
    "InsufficientSamples",
    "RngStream",
    "SimError",
    "TraceStats",
    "WaitingFit",
    "empirical_failure_ratio",
    "empirical_velocity",
    "failure_curve_crossing",
    "fit_waiting_geometric",
    "generate_arrivals",
    "initial_arrival_state",
    "materialize_links",
    "next_arrival",
    "simulate_tandem",
    "single_packet_delays",
    "stream_for",
    "waiting_independence",
]
