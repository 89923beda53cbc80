"""Domain types for erasure-cascade scenarios.

A :class:`Scenario` bundles everything needed to analyze or simulate one
system: the cascade's erasure structure (a link profile), the packet
arrival process, the per-hop timing convention (:class:`LinkMode`), and
horizon/seed bookkeeping.  :func:`validate_scenario` normalizes a
scenario (simplex renormalization, per-symbol channel-count
materialization) and rejects malformed input with a descriptive
:class:`ScenarioError` subclass.

Scenario files are JSON documents mirroring the dataclass fields::

    {
      "profile":  {"kind": "homogeneous", "p": 0.01, "r": 100},
      "arrivals": {"kind": "geometric", "lambda": 0.5},
      "mode": "delayed",
      "num_packets": 100000,
      "warmup_packets": 10000,
      "seed": 1
    }

Profile kinds and their fields:

``homogeneous``
    ``p`` (shared erasure probability), ``r`` (number of links).
``explicit``
    ``p_seq`` (one erasure probability per link, in cascade order).
``fixed``
    ``P`` (distinct erasure probabilities), ``Q`` (type fractions),
    ``r``.  The realized per-symbol link counts are apportioned from
    ``r * Q`` by largest remainder.
``probabilistic``
    ``P``, ``Qtilde`` (sampling distribution over symbols), ``r``.  Each
    replication draws its link sequence i.i.d. from ``Qtilde``.

Arrival kinds: ``single`` (one packet at slot 1), ``geometric``
(``lambda``, i.i.d. geometric interarrivals, equivalently Bernoulli
arrivals per slot), ``deterministic`` (``a``, a rational period >= 1;
JSON strings like ``"5/2"`` are accepted and decimal literals are read
exactly), ``gilbert_elliott`` (``gamma``, ``beta``, ``epsilon``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Union

SIMPLEX_TOL = 1e-12

_U64_MAX = 2**64 - 1


class ScenarioError(ValueError):
    """Base class for scenario validation failures."""


class NonSimplexType(ScenarioError):
    """Type fractions are negative or do not sum to 1 within tolerance."""


class ErasureOutOfRange(ScenarioError):
    """An erasure probability lies outside [0, 1)."""


class EmptyCascade(ScenarioError):
    """The profile describes zero links or zero symbols."""


class WarmupExceedsHorizon(ScenarioError):
    """warmup_packets >= num_packets leaves nothing to record."""


class ArrivalOutOfRange(ScenarioError):
    """An arrival-process parameter lies outside its legal range."""


class DuplicateErasureProbability(ScenarioError):
    """Symbol erasure probabilities must be pairwise distinct."""


class LinkMode(Enum):
    DELAYED = "delayed"
    INSTANTANEOUS = "instantaneous"


class VelocityDefinition(Enum):
    HOPS_PER_SLOT = "hops_per_slot"
    SLOTS_PER_HOP = "slots_per_hop"


@dataclass(frozen=True)
class Homogeneous:
    """All ``r`` links share erasure probability ``p``."""

    p: float
    r: int

    kind = "homogeneous"


@dataclass(frozen=True)
class Explicit:
    """One erasure probability per link, in cascade order."""

    p_seq: tuple[float, ...]

    kind = "explicit"

    @property
    def r(self) -> int:
        return len(self.p_seq)


@dataclass(frozen=True)
class FixedType:
    """Deterministic composition: fraction ``Q[i]`` of links use ``P[i]``.

    ``counts`` holds the materialized per-symbol link counts (summing to
    ``r``); it is filled in by :func:`validate_scenario`.
    """

    P: tuple[float, ...]
    Q: tuple[float, ...]
    r: int
    counts: tuple[int, ...] | None = None

    kind = "fixed"


@dataclass(frozen=True)
class Probabilistic:
    """Each link draws its erasure probability i.i.d. from ``Qtilde``."""

    P: tuple[float, ...]
    Qtilde: tuple[float, ...]
    r: int

    kind = "probabilistic"


LinkProfile = Union[Homogeneous, Explicit, FixedType, Probabilistic]


@dataclass(frozen=True)
class SinglePacket:
    """One packet, arriving at slot 1."""

    kind = "single"


@dataclass(frozen=True)
class Geometric:
    """I.i.d. geometric interarrivals with mean ``1/lam`` slots."""

    lam: float

    kind = "geometric"


@dataclass(frozen=True)
class Deterministic:
    """Packet ``i`` arrives at slot ``floor(i * a)``; ``a`` is rational."""

    a: Fraction

    kind = "deterministic"


@dataclass(frozen=True)
class GilbertElliott:
    """Two-state modulated arrivals.

    The chain moves good -> bad with probability ``gamma`` and
    bad -> good with probability ``beta`` each slot.  A packet arrives
    with probability ``epsilon`` per good slot and surely per bad slot.
    The chain starts from its stationary distribution.
    """

    gamma: float
    beta: float
    epsilon: float

    kind = "gilbert_elliott"


ArrivalSpec = Union[SinglePacket, Geometric, Deterministic, GilbertElliott]


@dataclass(frozen=True)
class Scenario:
    profile: LinkProfile
    arrivals: ArrivalSpec
    mode: LinkMode = LinkMode.DELAYED
    num_packets: int = 100_000
    warmup_packets: int | None = None
    seed: int = 0

    @property
    def stable(self) -> bool:
        """True when the arrival rate leaves every link's queue stable.

        Requires ``rate < 1 - p`` for every link erasure probability in
        the profile's support.  Single-packet scenarios are always
        stable.  Instability is advisory: simulation still runs.
        """
        rate = arrival_rate(self.arrivals)
        if rate == 0.0:
            return True
        return rate < 1.0 - _max_support_erasure(self.profile)


def _max_support_erasure(profile: LinkProfile) -> float:
    if isinstance(profile, Homogeneous):
        return profile.p
    if isinstance(profile, Explicit):
        return max(profile.p_seq)
    if isinstance(profile, FixedType):
        support = [p for p, q in zip(profile.P, profile.Q) if q > 0.0]
        return max(support) if support else 0.0
    support = [p for p, q in zip(profile.P, profile.Qtilde) if q > 0.0]
    return max(support) if support else 0.0


def arrival_rate(spec: ArrivalSpec) -> float:
    """Long-run packets per slot of an arrival process (0 for SinglePacket)."""
    if isinstance(spec, SinglePacket):
        return 0.0
    if isinstance(spec, Geometric):
        return spec.lam
    if isinstance(spec, Deterministic):
        return float(1 / spec.a)
    from .analytic import ge_stationary_rate

    return ge_stationary_rate(spec.gamma, spec.beta, spec.epsilon)


def _check_prob(value: float, what: str) -> float:
    p = float(value)
    if not 0.0 <= p < 1.0 or math.isnan(p):
        raise ErasureOutOfRange(f"{what} must lie in [0, 1), got {value!r}")
    return p


def _normalize_simplex(weights: tuple[float, ...], what: str) -> tuple[float, ...]:
    """Renormalize ``weights`` to sum to 1, or raise NonSimplexType.

    Renormalization iterates to a floating-point fixpoint so that
    validating twice returns bit-identical vectors.
    """
    if any(w < 0.0 or math.isnan(w) for w in weights):
        raise NonSimplexType(f"{what} entries must be nonnegative, got {weights!r}")
    total = math.fsum(weights)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise NonSimplexType(f"{what} must sum to 1 within {SIMPLEX_TOL}, got sum {total!r}")
    current = tuple(float(w) for w in weights)
    for _ in range(10):
        total = math.fsum(current)
        renormalized = tuple(w / total for w in current)
        if renormalized == current:
            break
        current = renormalized
    return current


def apportion_counts(Q: tuple[float, ...], r: int) -> tuple[int, ...]:
    """Split ``r`` links across symbols by largest remainder on ``r * Q``.

    Ties between equal remainders go to the lower index, so the result
    is deterministic.  Counts sum to ``r`` exactly.
    """
    exact = [r * q for q in Q]
    base = [math.floor(e) for e in exact]
    leftover = r - sum(base)
    order = sorted(range(len(Q)), key=lambda i: (base[i] - exact[i], i))
    for i in order[:leftover]:
        base[i] += 1
    return tuple(base)


def _validate_profile(profile: LinkProfile) -> LinkProfile:
    if isinstance(profile, Homogeneous):
        if profile.r < 1:
            raise EmptyCascade(f"cascade needs at least one link, got r={profile.r}")
        return Homogeneous(_check_prob(profile.p, "erasure probability p"), int(profile.r))
    if isinstance(profile, Explicit):
        if len(profile.p_seq) == 0:
            raise EmptyCascade("explicit profile has an empty link sequence")
        return Explicit(tuple(_check_prob(p, f"p_seq[{i}]") for i, p in enumerate(profile.p_seq)))
    if isinstance(profile, (FixedType, Probabilistic)):
        weights = profile.Q if isinstance(profile, FixedType) else profile.Qtilde
        if len(profile.P) == 0:
            raise EmptyCascade("profile has zero symbols")
        if len(profile.P) != len(weights):
            raise ScenarioError(
                f"P and type fractions disagree in length: {len(profile.P)} vs {len(weights)}"
            )
        if profile.r < 1:
            raise EmptyCascade(f"cascade needs at least one link, got r={profile.r}")
        P = tuple(_check_prob(p, f"P[{i}]") for i, p in enumerate(profile.P))
        if len(set(P)) != len(P):
            raise DuplicateErasureProbability(f"P entries must be pairwise distinct, got {P!r}")
        W = _normalize_simplex(tuple(float(w) for w in weights), "type fractions")
        if isinstance(profile, FixedType):
            return FixedType(P, W, int(profile.r), apportion_counts(W, int(profile.r)))
        return Probabilistic(P, W, int(profile.r))
    raise ScenarioError(f"unknown profile type {type(profile).__name__}")


def _validate_arrivals(spec: ArrivalSpec) -> ArrivalSpec:
    if isinstance(spec, SinglePacket):
        return spec
    if isinstance(spec, Geometric):
        lam = float(spec.lam)
        if not 0.0 < lam < 1.0:
            raise ArrivalOutOfRange(f"geometric arrival rate must lie in (0, 1), got {spec.lam!r}")
        return Geometric(lam)
    if isinstance(spec, Deterministic):
        a = spec.a if isinstance(spec.a, Fraction) else Fraction(spec.a)
        if a < 1:
            raise ArrivalOutOfRange(f"deterministic period must be >= 1, got {spec.a!r}")
        return Deterministic(a)
    if isinstance(spec, GilbertElliott):
        fields = {"gamma": spec.gamma, "beta": spec.beta, "epsilon": spec.epsilon}
        for name, value in fields.items():
            v = float(value)
            if not 0.0 <= v <= 1.0 or math.isnan(v):
                raise ArrivalOutOfRange(f"{name} must lie in [0, 1], got {value!r}")
        return GilbertElliott(float(spec.gamma), float(spec.beta), float(spec.epsilon))
    raise ScenarioError(f"unknown arrival type {type(spec).__name__}")


def validate_scenario(raw: Scenario) -> Scenario:
    """Return a normalized copy of ``raw`` or raise a ScenarioError.

    Normalization renormalizes type fractions whose sum is within
    ``SIMPLEX_TOL`` of 1 and materializes FixedType link counts.  The
    function is idempotent: validating a validated scenario returns an
    identical one.
    """
    profile = _validate_profile(raw.profile)
    arrivals = _validate_arrivals(raw.arrivals)
    if not isinstance(raw.mode, LinkMode):
        raise ScenarioError(f"mode must be a LinkMode, got {raw.mode!r}")
    num_packets = int(raw.num_packets)
    if num_packets < 1:
        raise ScenarioError(f"num_packets must be >= 1, got {raw.num_packets!r}")
    warmup = raw.warmup_packets
    warmup = num_packets // 10 if warmup is None else int(warmup)
    if warmup < 0:
        raise ScenarioError(f"warmup_packets must be >= 0, got {raw.warmup_packets!r}")
    if warmup >= num_packets:
        raise WarmupExceedsHorizon(
            f"warmup_packets={warmup} leaves no recorded packets out of {num_packets}"
        )
    seed = int(raw.seed)
    if not 0 <= seed <= _U64_MAX:
        raise ScenarioError(f"seed must fit in an unsigned 64-bit integer, got {raw.seed!r}")
    return Scenario(profile, arrivals, raw.mode, num_packets, warmup, seed)


def link_sequence(profile: LinkProfile) -> tuple[float, ...]:
    """Materialized per-link erasure probabilities, in cascade order.

    Probabilistic profiles have no fixed sequence (each replication
    draws its own); asking for one raises ValueError.
    """
    if isinstance(profile, Homogeneous):
        return (profile.p,) * profile.r
    if isinstance(profile, Explicit):
        return profile.p_seq
    if isinstance(profile, FixedType):
        counts = profile.counts
        if counts is None:
            counts = apportion_counts(profile.Q, profile.r)
        out: list[float] = []
        for p, c in zip(profile.P, counts):
            out.extend([p] * c)
        return tuple(out)
    raise ValueError("probabilistic profiles are materialized per replication, not statically")


def type_weights(profile: LinkProfile) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Return ``(weights, probabilities)`` describing the profile's mix.

    Homogeneous profiles yield a singleton; Explicit profiles yield the
    empirical type over their distinct values (ascending).
    """
    if isinstance(profile, Homogeneous):
        return (1.0,), (profile.p,)
    if isinstance(profile, Explicit):
        values = sorted(set(profile.p_seq))
        n = len(profile.p_seq)
        return tuple(profile.p_seq.count(v) / n for v in values), tuple(values)
    if isinstance(profile, FixedType):
        return profile.Q, profile.P
    return profile.Qtilde, profile.P


_PROFILE_KINDS = {
    "homogeneous": Homogeneous,
    "explicit": Explicit,
    "fixed": FixedType,
    "probabilistic": Probabilistic,
}

_ARRIVAL_KINDS = {
    "single": SinglePacket,
    "geometric": Geometric,
    "deterministic": Deterministic,
    "gilbert_elliott": GilbertElliott,
}


def _profile_from_dict(d: dict) -> LinkProfile:
    kind = d.get("kind")
    if kind not in _PROFILE_KINDS:
        raise ScenarioError(f"unknown profile kind {kind!r}")
    if kind == "homogeneous":
        return Homogeneous(float(d["p"]), int(d["r"]))
    if kind == "explicit":
        return Explicit(tuple(float(p) for p in d["p_seq"]))
    if kind == "fixed":
        return FixedType(
            tuple(float(p) for p in d["P"]),
            tuple(float(q) for q in d["Q"]),
            int(d["r"]),
        )
    return Probabilistic(
        tuple(float(p) for p in d["P"]),
        tuple(float(q) for q in d["Qtilde"]),
        int(d["r"]),
    )


def _arrivals_from_dict(d: dict) -> ArrivalSpec:
    kind = d.get("kind")
    if kind not in _ARRIVAL_KINDS:
        raise ScenarioError(f"unknown arrival kind {kind!r}")
    if kind == "single":
        return SinglePacket()
    if kind == "geometric":
        return Geometric(float(d["lambda"]))
    if kind == "deterministic":
        return Deterministic(Fraction(d["a"]))
    return GilbertElliott(float(d["gamma"]), float(d["beta"]), float(d["epsilon"]))


def scenario_from_dict(d: dict) -> Scenario:
    """Build an (unvalidated) Scenario from a JSON-style dictionary."""
    try:
        profile = _profile_from_dict(d["profile"])
        arrivals = _arrivals_from_dict(d["arrivals"])
    except KeyError as missing:
        raise ScenarioError(f"scenario is missing field {missing}") from None
    mode_name = str(d.get("mode", "delayed")).lower()
    try:
        mode = LinkMode(mode_name)
    except ValueError:
        raise ScenarioError(f"mode must be 'delayed' or 'instantaneous', got {d.get('mode')!r}")
    num_packets = int(d.get("num_packets", 100_000))
    warmup = d.get("warmup_packets")
    return Scenario(
        profile=profile,
        arrivals=arrivals,
        mode=mode,
        num_packets=num_packets,
        warmup_packets=None if warmup is None else int(warmup),
        seed=int(d.get("seed", 0)),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    profile: dict[str, object]
    p = sc.profile
    if isinstance(p, Homogeneous):
        profile = {"kind": p.kind, "p": p.p, "r": p.r}
    elif isinstance(p, Explicit):
        profile = {"kind": p.kind, "p_seq": list(p.p_seq)}
    elif isinstance(p, FixedType):
        profile = {"kind": p.kind, "P": list(p.P), "Q": list(p.Q), "r": p.r}
    else:
        profile = {"kind": p.kind, "P": list(p.P), "Qtilde": list(p.Qtilde), "r": p.r}
    a = sc.arrivals
    if isinstance(a, SinglePacket):
        arrivals: dict[str, object] = {"kind": a.kind}
    elif isinstance(a, Geometric):
        arrivals = {"kind": a.kind, "lambda": a.lam}
    elif isinstance(a, Deterministic):
        arrivals = {"kind": a.kind, "a": str(a.a)}
    else:
        arrivals = {"kind": a.kind, "gamma": a.gamma, "beta": a.beta, "epsilon": a.epsilon}
    out = {
        "profile": profile,
        "arrivals": arrivals,
        "mode": sc.mode.value,
        "num_packets": sc.num_packets,
        "seed": sc.seed,
    }
    if sc.warmup_packets is not None:
        out["warmup_packets"] = sc.warmup_packets
    return out


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario JSON file.

    Decimal literals are parsed exactly (via Fraction) so that rational
    arrival periods like ``1.3`` mean 13/10, not the nearest double.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh, parse_float=Fraction)
    if not isinstance(doc, dict) or "profile" not in doc:
        raise ScenarioError(f"{path}: not a scenario file (missing 'profile')")
    return validate_scenario(scenario_from_dict(doc))


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)
        fh.write("\n")


def with_horizon(sc: Scenario, num_packets: int, warmup_packets: int) -> Scenario:
    """Copy ``sc`` with a different packet horizon."""
    return replace(sc, num_packets=num_packets, warmup_packets=warmup_packets)
