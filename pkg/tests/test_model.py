import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivelox.model import (
    ArrivalOutOfRange,
    Deterministic,
    DuplicateErasureProbability,
    EmptyCascade,
    ErasureOutOfRange,
    Explicit,
    FixedType,
    Geometric,
    GilbertElliott,
    Homogeneous,
    LinkMode,
    NonSimplexType,
    Probabilistic,
    Scenario,
    ScenarioError,
    SinglePacket,
    WarmupExceedsHorizon,
    apportion_counts,
    arrival_rate,
    link_sequence,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    type_weights,
    validate_scenario,
)


def make(profile, arrivals=None, **kw):
    return Scenario(profile=profile, arrivals=arrivals or SinglePacket(), **kw)


class TestProfileValidation:
    def test_homogeneous_roundtrip(self):
        sc = validate_scenario(make(Homogeneous(p=0.25, r=3)))
        assert sc.profile == Homogeneous(0.25, 3)

    def test_p_equal_one_rejected(self):
        with pytest.raises(ErasureOutOfRange):
            validate_scenario(make(Homogeneous(p=1.0, r=3)))

    def test_negative_p_rejected(self):
        with pytest.raises(ErasureOutOfRange):
            validate_scenario(make(Explicit(p_seq=(0.2, -0.1))))

    def test_empty_cascade(self):
        with pytest.raises(EmptyCascade):
            validate_scenario(make(Explicit(p_seq=())))
        with pytest.raises(EmptyCascade):
            validate_scenario(make(Homogeneous(p=0.1, r=0)))

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(DuplicateErasureProbability):
            validate_scenario(make(FixedType(P=(0.3, 0.3), Q=(0.5, 0.5), r=4)))

    def test_non_simplex_rejected(self):
        with pytest.raises(NonSimplexType):
            validate_scenario(make(FixedType(P=(0.1, 0.2), Q=(0.6, 0.6), r=4)))
        with pytest.raises(NonSimplexType):
            validate_scenario(make(Probabilistic(P=(0.1,), Qtilde=(-1.0,), r=4)))

    def test_near_simplex_renormalized(self):
        q = (0.5 + 2e-13, 0.5)
        sc = validate_scenario(make(FixedType(P=(0.1, 0.2), Q=q, r=4)))
        assert math.fsum(sc.profile.Q) == pytest.approx(1.0, abs=1e-16)

    def test_counts_materialized(self):
        sc = validate_scenario(make(FixedType(P=(0.01, 0.1), Q=(0.5, 0.5), r=1000)))
        assert sc.profile.counts == (500, 500)

    def test_validation_idempotent(self):
        raw = make(
            FixedType(P=(0.05, 0.2, 0.4), Q=(0.3, 0.3, 0.4), r=7),
            Geometric(lam=0.4),
            num_packets=50,
        )
        once = validate_scenario(raw)
        twice = validate_scenario(once)
        assert once == twice


class TestApportionment:
    def test_exact_split(self):
        assert apportion_counts((0.5, 0.5), 10) == (5, 5)

    def test_largest_remainder(self):
        # 7 * (0.4, 0.3, 0.3) = (2.8, 2.1, 2.1): the two spare links go
        # to the largest fractional parts, lower index first on ties
        assert apportion_counts((0.4, 0.3, 0.3), 7) == (3, 2, 2)

    def test_sums_to_r(self):
        for r in (1, 3, 17, 1000):
            counts = apportion_counts((0.21, 0.33, 0.46), r)
            assert sum(counts) == r

    @given(
        st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6),
        st.integers(1, 500),
    )
    def test_apportionment_properties(self, weights, r):
        total = math.fsum(weights)
        q = tuple(w / total for w in weights)
        counts = apportion_counts(q, r)
        assert sum(counts) == r
        assert all(abs(c - r * qi) < 1.0 for c, qi in zip(counts, q))


class TestArrivalValidation:
    def test_geometric_range(self):
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ArrivalOutOfRange):
                validate_scenario(make(Homogeneous(0.1, 1), Geometric(lam=bad)))

    def test_deterministic_fraction_coercion(self):
        sc = validate_scenario(make(Homogeneous(0.1, 1), Deterministic(a=2)))
        assert sc.arrivals.a == Fraction(2)
        with pytest.raises(ArrivalOutOfRange):
            validate_scenario(make(Homogeneous(0.1, 1), Deterministic(a=Fraction(1, 2))))

    def test_gilbert_elliott_range(self):
        with pytest.raises(ArrivalOutOfRange):
            validate_scenario(
                make(Homogeneous(0.1, 1), GilbertElliott(gamma=1.2, beta=0.1, epsilon=0.5))
            )

    def test_rates(self):
        assert arrival_rate(SinglePacket()) == 0.0
        assert arrival_rate(Geometric(lam=0.37)) == 0.37
        assert arrival_rate(Deterministic(a=Fraction(5, 2))) == 0.4
        assert arrival_rate(GilbertElliott(0.01, 0.1, 0.45)) == pytest.approx(0.5)


class TestScenarioFields:
    def test_warmup_default_is_tenth(self):
        sc = validate_scenario(make(Homogeneous(0.1, 1), Geometric(0.5), num_packets=1000))
        assert sc.warmup_packets == 100

    def test_warmup_overflow(self):
        with pytest.raises(WarmupExceedsHorizon):
            validate_scenario(
                make(Homogeneous(0.1, 1), Geometric(0.5), num_packets=10, warmup_packets=10)
            )

    def test_bad_seed(self):
        with pytest.raises(ScenarioError):
            validate_scenario(make(Homogeneous(0.1, 1), seed=-1))
        with pytest.raises(ScenarioError):
            validate_scenario(make(Homogeneous(0.1, 1), seed=2**64))

    def test_stability_flag(self):
        stable = make(Homogeneous(0.01, 20), Geometric(0.5))
        unstable = make(Homogeneous(0.6, 20), Geometric(0.5))
        assert stable.stable and not unstable.stable
        # support-restricted: a zero-weight heavy symbol is ignored
        mixed = make(FixedType(P=(0.05, 0.9), Q=(1.0, 0.0), r=4), Geometric(0.5))
        assert mixed.stable


class TestSequencesAndWeights:
    def test_link_sequence_fixed(self):
        prof = validate_scenario(make(FixedType(P=(0.1, 0.5), Q=(0.75, 0.25), r=4))).profile
        assert link_sequence(prof) == (0.1, 0.1, 0.1, 0.5)

    def test_link_sequence_probabilistic_raises(self):
        with pytest.raises(ValueError):
            link_sequence(Probabilistic(P=(0.1,), Qtilde=(1.0,), r=4))

    def test_type_weights_explicit(self):
        w, p = type_weights(Explicit(p_seq=(0.3, 0.1, 0.3, 0.3)))
        assert p == (0.1, 0.3)
        assert w == (0.25, 0.75)

    def test_type_weights_homogeneous(self):
        assert type_weights(Homogeneous(0.2, 9)) == ((1.0,), (0.2,))


class TestJson:
    def test_round_trip(self, tmp_path):
        sc = validate_scenario(
            make(
                FixedType(P=(0.01, 0.1), Q=(0.5, 0.5), r=100),
                GilbertElliott(0.01, 0.1, 0.45),
                mode=LinkMode.INSTANTANEOUS,
                num_packets=5000,
                warmup_packets=500,
                seed=42,
            )
        )
        path = tmp_path / "sc.json"
        save_scenario(sc, str(path))
        back = load_scenario(str(path))
        assert back == sc

    def test_deterministic_period_exact(self, tmp_path):
        doc = {
            "profile": {"kind": "homogeneous", "p": 0.1, "r": 2},
            "arrivals": {"kind": "deterministic", "a": 1.3},
        }
        path = tmp_path / "det.json"
        path.write_text(json.dumps(doc))
        sc = load_scenario(str(path))
        # 1.3 must mean 13/10 exactly, not the nearest double
        assert sc.arrivals.a == Fraction(13, 10)

    def test_fraction_string_period(self):
        sc = scenario_from_dict(
            {
                "profile": {"kind": "homogeneous", "p": 0.1, "r": 2},
                "arrivals": {"kind": "deterministic", "a": "5/2"},
            }
        )
        assert sc.arrivals.a == Fraction(5, 2)

    def test_missing_profile(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{}")
        with pytest.raises(ScenarioError):
            load_scenario(str(path))

    def test_unknown_kind(self):
        with pytest.raises(ScenarioError):
            scenario_from_dict({"profile": {"kind": "nope"}, "arrivals": {"kind": "single"}})

    def test_bad_mode(self):
        with pytest.raises(ScenarioError):
            scenario_from_dict(
                {
                    "profile": {"kind": "homogeneous", "p": 0.1, "r": 1},
                    "arrivals": {"kind": "single"},
                    "mode": "psychic",
                }
            )

    def test_dict_round_trip_preserves_defaults(self):
        sc = make(Homogeneous(0.1, 5))
        assert scenario_from_dict(scenario_to_dict(sc)) == sc


@settings(max_examples=200)
@given(
    st.lists(st.floats(0.0, 0.99), min_size=1, max_size=5, unique=True),
    st.integers(1, 50),
    st.integers(0, 2**32),
)
def test_validate_fixed_idempotent_bitwise(P, r, seed):
    q = tuple(1.0 / len(P) for _ in P)
    raw = make(FixedType(P=tuple(P), Q=q, r=r), Geometric(0.5), num_packets=100, seed=seed)
    once = validate_scenario(raw)
    assert validate_scenario(once) == once
    assert sum(once.profile.counts) == r
