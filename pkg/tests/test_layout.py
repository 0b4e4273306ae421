import hashlib
import json

import numpy as np
import pytest

from oracles import brute_candidates
from phasemark.errors import CapacityError
from phasemark.layout import BandConfig, build_plan, enumerate_candidates, keyed_order
from phasemark.prng import splitmix64
from phasemark.spectrum import mirror

# sha256 of the default plan export; the cross-implementation conformance anchor
DEFAULT_PLAN_SHA256 = "c488005c23984ba95fd02ddcbd19a6bc737b9921e225359273e0cd58d8926c73"


def test_splitmix_reference_vectors():
    # published splitmix64 outputs for seed 1234567
    expected = [6457827717110365317, 3203168211198807973, 9817491932198370423,
                4593380528125082431, 16408922859458223821]
    assert [splitmix64(1234567, i) for i in range(5)] == expected


@pytest.mark.parametrize("offsets", [True, False])
def test_default_candidates_match_oracle(offsets):
    cfg = BandConfig(axis_offset_enabled=offsets)
    got = {tuple(p) for p in enumerate_candidates(cfg)}
    assert got == brute_candidates(44, 10.0, 18.0, offsets)
    assert len(got) == (70 if offsets else 86)


def test_toy_band_matches_oracle():
    cfg = BandConfig(crop_size=8, r_lo=1.0, r_hi=1.4, bits_per_channel=1, axis_offset_enabled=False)
    assert {tuple(p) for p in enumerate_candidates(cfg)} == brute_candidates(8, 1.0, 1.4, False) == set()
    cfg = BandConfig(crop_size=8, r_lo=1.0, r_hi=3.0, bits_per_channel=1, axis_offset_enabled=False)
    assert {tuple(p) for p in enumerate_candidates(cfg)} == {(-2, -2), (-2, 0), (-2, 2)}


def test_canonical_order_by_radius():
    radii = [p.radius for p in enumerate_candidates(BandConfig())]
    assert radii == sorted(radii)


def test_invalid_band_rejected():
    with pytest.raises(ValueError):
        BandConfig(r_lo=18, r_hi=10)
    with pytest.raises(ValueError):
        BandConfig(r_hi=22)


def test_capacity_error_names_counts():
    with pytest.raises(CapacityError, match="70.*700"):
        build_plan(BandConfig(bits_per_channel=700))


def test_plan_deterministic():
    a = BandConfig(key=99)
    assert build_plan(a).to_json() == build_plan(BandConfig(key=99)).to_json()
    build_plan.cache_clear()
    assert build_plan(a).to_json() == build_plan(BandConfig(key=99)).to_json()


def test_key_changes_order_only():
    cfg_a = BandConfig(bits_per_channel=70)
    cfg_b = BandConfig(bits_per_channel=70, key=0xDEADBEEF)
    a, b = build_plan(cfg_a).blocks, build_plan(cfg_b).blocks
    assert a != b and set(a) == set(b)


def test_keyed_order_is_sort_by_mix():
    order = keyed_order(20, 7)
    mixes = [splitmix64(7, i) for i in order]
    assert mixes == sorted(mixes) and sorted(order) == list(range(20))


def test_non_collision_default():
    plan = build_plan(BandConfig(bits_per_channel=70))
    bins = list(zip(plan.rows.ravel().tolist(), plan.cols.ravel().tolist()))
    mirrors = list(zip(plan.mirror_rows.ravel().tolist(), plan.mirror_cols.ravel().tolist()))
    assert len(set(bins + mirrors)) == 2 * len(bins)


def test_mirror_arrays_consistent():
    plan = build_plan(BandConfig())
    mr, mc = mirror(plan.rows, plan.cols, 44, 44)
    np.testing.assert_array_equal(mr, plan.mirror_rows)
    np.testing.assert_array_equal(mc, plan.mirror_cols)


@pytest.mark.parametrize("crop,lo,hi", [(44, 10, 18), (44, 4, 12), (32, 6, 14), (64, 12, 30)])
def test_axis_offset_monotone(crop, lo, hi):
    on = BandConfig(crop_size=crop, r_lo=lo, r_hi=hi, bits_per_channel=1)
    off = BandConfig(crop_size=crop, r_lo=lo, r_hi=hi, bits_per_channel=1, axis_offset_enabled=False)
    assert len(enumerate_candidates(on)) <= len(enumerate_candidates(off))


def test_band_containment():
    plan = build_plan(BandConfig(bits_per_channel=70))
    for p in plan.blocks:
        for du, dv in p.centered_bins():
            assert abs(du) <= 19 and abs(dv) <= 19


def test_message_length():
    assert BandConfig().message_length == 128
    assert build_plan(BandConfig(n_channels=2)).capacity == 64


def test_plan_json_golden():
    text = build_plan(BandConfig()).to_json()
    assert hashlib.sha256(text.encode()).hexdigest() == DEFAULT_PLAN_SHA256
    doc = json.loads(text)
    assert sorted(doc["channels"]) == ["0", "1", "2", "3"]
    assert all(len(v) == 32 for v in doc["channels"].values())
