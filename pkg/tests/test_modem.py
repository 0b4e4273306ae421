import numpy as np
import pytest
from scipy import stats as sps

from phasemark.errors import ShapeError
from phasemark.layout import BandConfig, build_plan
from phasemark.modem import (
    ModemParams,
    PcqConstellations,
    Variant,
    angular_distance,
    detect_block,
    detect_blocks,
    embed_block,
    embed_blocks,
    embed_message,
    extract_message,
)
from phasemark.tensor import Message

PI = np.pi
VARIANTS = list(Variant)


def _random_blocks(rng, n):
    return rng.normal(size=(n, 4)) + 1j * rng.normal(size=(n, 4))


def test_angular_distance_cases():
    assert angular_distance(PI, -PI) == pytest.approx(0.0, abs=1e-15)
    assert angular_distance(0, PI / 2) == pytest.approx(PI / 2)
    assert angular_distance(3, -3) == pytest.approx(2 * PI - 6)


def test_apm_example():
    b = np.array([3, 3, 3, 3], dtype=complex)
    np.testing.assert_allclose(embed_block(b, 1, "apm"), [3j] * 4, atol=1e-15)
    np.testing.assert_allclose(embed_block(b, 0, "apm"), [-3j] * 4, atol=1e-15)


def test_ips_example():
    out = embed_block(np.array([1, 2j, 1, 2j]), 0, "ips")
    assert out[1] == pytest.approx(-2 + 0j)
    assert out[0] == 1 and out[2] == 1


def test_sps_example():
    out = embed_block(np.array([1, 2j, 1, 2j]), 1, "sps", ModemParams(gamma=0.5))
    assert out[1] == pytest.approx(1 + 1j)


def test_pcq_example():
    out = embed_block(np.full(4, np.exp(2j)), 1, "pcq")
    np.testing.assert_allclose(out, np.full(4, np.exp(1j * 3 * PI / 4)))


def test_pcq_tie_goes_to_smaller_phase():
    # phase 0 is equidistant from -pi/2 and pi/2
    ties = PcqConstellations(p0=(-PI / 2, PI / 2), p1=(0.0, PI))
    out = embed_block(np.full(4, 1.0 + 0j), 0, "pcq", ModemParams(constellations=ties))
    np.testing.assert_allclose(np.angle(out), -PI / 2)


def test_constellation_separation_enforced():
    with pytest.raises(ValueError):
        PcqConstellations(p0=(0.0,), p1=(0.1,))


def test_detect_examples():
    assert detect_block(np.full(4, 1j), "apm") == (1, pytest.approx(2 * PI))
    assert detect_block(np.array([1, 1, 1j, 1j]), "ips") == (1, pytest.approx(2.0))
    bit, score = detect_block(np.full(4, np.exp(1j * PI / 4)), "pcq")
    assert bit == 1 and score == pytest.approx(PI)  # distance pi/4 per element to the axis set


def test_zero_score_is_bit_zero():
    assert detect_block(np.array([1, -1, 1, 1]), "ips") == (0, 0.0)  # cos(pi) + cos(0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_round_trip_1e5(variant, rng):
    blocks = _random_blocks(rng, 100_000)
    bits = rng.integers(0, 2, 100_000)
    new, _, skipped = embed_blocks(blocks, bits, variant)
    assert not skipped.any()
    got, _ = detect_blocks(new, variant)
    np.testing.assert_array_equal(got, bits)


def test_sps_gamma_one_is_ips(rng):
    blocks = _random_blocks(rng, 1000)
    bits = rng.integers(0, 2, 1000)
    a = embed_blocks(blocks, bits, "sps", ModemParams(gamma=1.0))[0]
    b = embed_blocks(blocks, bits, "ips")[0]
    assert np.array_equal(a, b)


@pytest.mark.parametrize("variant", ["apm", "pcq", "ips"])
def test_magnitude_preserved(variant, rng):
    blocks = _random_blocks(rng, 5000)
    new = embed_blocks(blocks, rng.integers(0, 2, 5000), variant)[0]
    np.testing.assert_allclose(np.abs(new), np.abs(blocks), rtol=1e-12)


@pytest.mark.parametrize("variant", ["ips", "sps"])
def test_anchors_untouched(variant, rng):
    blocks = _random_blocks(rng, 1000)
    new = embed_blocks(blocks, rng.integers(0, 2, 1000), variant)[0]
    assert np.array_equal(new[:, [0, 2]], blocks[:, [0, 2]])


def test_distortion_ordering(rng):
    blocks = _random_blocks(rng, 100_000)
    bits = rng.integers(0, 2, 100_000)
    err = {v: np.mean(np.sum(np.abs(embed_blocks(blocks, bits, v)[0] - blocks) ** 2, axis=1)) for v in VARIANTS}
    assert err[Variant.PCQ] <= err[Variant.SPS] <= err[Variant.IPS] <= err[Variant.APM]


def test_apm_error_not_above_pcq_under_phase_noise(rng):
    n = 100_000
    blocks = _random_blocks(rng, n)
    bits = rng.integers(0, 2, n)
    rates = {}
    for v in ("apm", "pcq"):
        new = embed_blocks(blocks, bits, v)[0]
        noisy = new * np.exp(1j * rng.normal(0, 0.3, new.shape))
        rates[v] = np.mean(detect_blocks(noisy, v)[0] != bits)
    assert rates["apm"] <= rates["pcq"]


def test_zero_element_flags():
    blocks = np.array([[0, 1, 1, 1], [1, 1, 1, 1]], dtype=complex)
    new, zero, skipped = embed_blocks(blocks, [1, 1], "apm")
    assert zero.sum() == 1 and new[0, 0] == 0 and not skipped.any()
    new, zero, skipped = embed_blocks(blocks, [0, 0], "ips")
    assert skipped.tolist() == [True, False]
    assert np.array_equal(new[0], blocks[0])


def test_shape_errors():
    with pytest.raises(ShapeError):
        embed_blocks(np.zeros((3, 3), complex), [0, 0, 0], "apm")
    with pytest.raises(ShapeError):
        embed_blocks(np.ones((3, 4), complex), [0, 1], "apm")


def _real_spectra(rng, c=4, n=44):
    return np.fft.fft2(rng.normal(size=(c, n, n)))


@pytest.mark.parametrize("variant", VARIANTS)
def test_message_round_trip(variant, rng):
    plan = build_plan(BandConfig())
    for _ in range(5):
        msg = Message.random(128, rng)
        out, touched, stats = embed_message(_real_spectra(rng), plan, msg, variant)
        got, scores = extract_message(out, plan, variant)
        assert got == msg and scores.shape == (128,)
        expected = 32 * (2 if Variant(variant).relative else 4)
        assert all(t.shape == (expected, 2) for t in touched)
        assert stats.skipped_blocks == 0


def test_message_length_mismatch(rng):
    with pytest.raises(ShapeError):
        embed_message(_real_spectra(rng), build_plan(BandConfig()), Message.random(64, rng), "apm")


@pytest.mark.parametrize("variant", VARIANTS)
def test_null_bits_are_fair(variant):
    rng = np.random.default_rng(2024)
    plan = build_plan(BandConfig())
    ones = 0
    total = 0
    for _ in range(100):  # 100 x 128 = 12800 bits
        msg, _ = extract_message(_real_spectra(rng), plan, variant)
        ones += int(msg.bits.sum())
        total += len(msg)
    p = sps.chisquare([ones, total - ones]).pvalue
    assert p > 0.001
