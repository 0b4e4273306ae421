import json

import numpy as np
import pytest

from phasemark.codec import BlockMeanCodec, SpaceToDepthCodec
from phasemark.errors import ShapeError
from phasemark.layout import BandConfig
from phasemark.modem import Variant
from phasemark.pipeline import PipelineConfig, crop_center, embed, extract_latent, identify, paste_center, verify
from phasemark.stats import Codebook, generate_codebook, threshold
from phasemark.tensor import ImageBuffer, LatentTensor, Message


def _latent(rng, h=64, w=64, c=4):
    return LatentTensor(rng.normal(size=(h, w, c)))


def test_crop_offsets(rng):
    lat = _latent(rng)
    crop, place = crop_center(lat, 44)
    assert (place.top, place.left) == (10, 10)
    np.testing.assert_array_equal(crop.data, lat.data[10:54, 10:54])
    p = crop_center(_latent(rng, 45, 47), 44)[1]
    assert (p.top, p.left) == (0, 1)
    full, p = crop_center(lat, 64)
    assert full == lat and paste_center(lat, full, p) == lat
    assert paste_center(lat, crop, place) == lat
    with pytest.raises(ShapeError):
        crop_center(lat, 65)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("mode", ["restored", "cutoff"])
def test_round_trip_and_locality(variant, mode, rng):
    cfg = PipelineConfig(variant=variant, realize_mode=mode)
    lat = _latent(rng)
    msg = Message.random(128, rng)
    out, diag = embed(lat, msg, cfg)
    assert isinstance(out, LatentTensor)
    diff = out.data != lat.data
    assert not diff[:10].any() and not diff[54:].any() and not diff[:, :10].any() and not diff[:, 54:].any()
    if mode == "restored":
        assert diag.max_imag_residual < 1e-9
        report = verify(out, msg, cfg)
        assert report.decision and report.bit_accuracy == 1.0


def test_deterministic(rng):
    lat, msg = _latent(rng), Message.random(128, rng)
    cfg = PipelineConfig(variant="sps")
    assert embed(lat, msg, cfg)[0] == embed(lat, msg, cfg)[0]


def test_image_round_trip_blockmean(rng):
    cfg = PipelineConfig(variant="ips", band=BandConfig(n_channels=3), codec=BlockMeanCodec(8))
    img = ImageBuffer(np.clip(0.5 + 0.05 * rng.normal(size=(512, 512, 3)), 0, 1))
    msg = Message.random(96, rng)
    out, diag = embed(img, msg, cfg)
    assert isinstance(out, ImageBuffer) and out.shape == img.shape
    assert diag.clipping_fraction == 0.0
    assert verify(out, msg, cfg).bit_accuracy == 1.0


def test_image_round_trip_s2d(rng):
    cfg = PipelineConfig(variant="apm", codec=SpaceToDepthCodec(8))
    img = ImageBuffer(np.clip(0.5 + 0.05 * rng.normal(size=(512, 512)), 0, 1))
    msg = Message.random(128, rng)
    out, _ = embed(img, msg, cfg)
    assert verify(out, msg, cfg).bit_accuracy == 1.0


def test_unmarked_not_detected(rng):
    cfg = PipelineConfig()
    report = verify(_latent(rng), Message.random(128, rng), cfg)
    assert report.bit_accuracy < threshold(128).tau or not report.decision


def test_length_mismatch(rng):
    cfg = PipelineConfig()
    with pytest.raises(ShapeError):
        verify(_latent(rng), Message.random(64, rng), cfg)
    with pytest.raises(ShapeError):
        embed(_latent(rng), Message.random(64, rng), cfg)
    with pytest.raises(ShapeError):
        embed(_latent(rng, c=2), Message.random(128, rng), cfg)


def test_translation_search(rng):
    cfg = PipelineConfig(variant="apm")  # absolute phases: a one-bin shift scrambles them
    msg = Message.random(128, rng)
    out, _ = embed(_latent(rng), msg, cfg)
    shifted = LatentTensor(out.data[3:, 3:])  # floor crop now lands one bin off
    assert verify(shifted, msg, cfg).bit_accuracy < 0.9
    report = verify(shifted, msg, cfg.replace(translation_search=1))
    assert report.bit_accuracy == 1.0
    assert report.diagnostics["translation_offset"] == [-1, -1]
    assert report.diagnostics["candidate_shifts"] == 9


def test_identify(rng):
    cfg = PipelineConfig(variant="pcq")
    cb = generate_codebook(1000, 128, seed=4)
    out, _ = embed(_latent(rng), cb.message(417), cfg)
    report = identify(out, cb, cfg, population=10**6)
    assert report.user_id == 417 and report.decision and report.threshold.k == 96
    single = Codebook.from_messages([cb.message(417)])
    assert identify(out, single, cfg).threshold == verify(out, cb.message(417), cfg).threshold


def test_report_json(rng):
    cfg = PipelineConfig()
    msg = Message.random(128, rng)
    out, _ = embed(_latent(rng), msg, cfg)
    doc = json.loads(verify(out, msg, cfg).to_json())
    assert doc["decision"] is True and doc["message"] == msg.to_hex()
    assert doc["threshold"]["k"] == 78 and len(doc["scores"]) == 128
    assert set(doc["diagnostics"]) >= {"clipping_fraction", "translation_offset", "candidate_shifts"}


def test_extract_shift_out_of_bounds(rng):
    with pytest.raises(ShapeError):
        extract_latent(_latent(rng, 44, 44), PipelineConfig(), (1, 0))
