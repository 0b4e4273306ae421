import json
import subprocess
import sys

import numpy as np
import pytest

from phasemark.cli import main
from phasemark.tensor import LatentTensor, save_latent

MSG = "0123456789abcdef0123456789abcdef"


def _run(*args):
    return subprocess.run([sys.executable, "-m", "phasemark", *args], capture_output=True, text=True)


@pytest.fixture
def latent_file(tmp_path):
    p = tmp_path / "in.pmlt"
    save_latent(LatentTensor(np.random.default_rng(0).normal(size=(64, 64, 4))), p)
    return p


def test_embed_verify_subprocess(tmp_path, latent_file):
    out = tmp_path / "out.pmlt"
    r = _run("embed", "--in", str(latent_file), "--out", str(out), "--variant", "sps", "--key", "0x2a", "--message", MSG)
    assert r.returncode == 0, r.stderr
    r = _run("verify", "--in", str(out), "--variant", "sps", "--key", "42", "--message", MSG)
    assert r.returncode == 0
    assert json.loads(r.stdout)["bit_accuracy"] == 1.0
    r = _run("verify", "--in", str(out), "--variant", "sps", "--key", "43", "--message", MSG)
    assert r.returncode == 1
    assert json.loads(r.stdout)["decision"] is False


def test_missing_input_exit_2(tmp_path, capsys):
    assert main(["verify", "--in", str(tmp_path / "nope.pmlt"), "--message", MSG]) == 2
    err = capsys.readouterr().err
    assert err.startswith("phasemark: error:") and err.count("\n") == 1


def test_bad_message_exit_2(latent_file):
    assert main(["verify", "--in", str(latent_file), "--message", "xyz"]) == 2


def test_threshold_output(capsys):
    assert main(["threshold", "--bits", "2", "--alpha", "0.3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["k"] == 2 and doc["tau"] == 1.0
    assert main(["threshold", "--bits", "128", "--alpha", "0.01", "--population", "1000000"]) == 0
    assert json.loads(capsys.readouterr().out)["k"] == 96


def test_config_file_and_flag_override(tmp_path, latent_file, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"variant": "ips", "channels": 2, "message": MSG[:16]}))
    out = tmp_path / "o.pmlt"
    assert main(["embed", "--in", str(latent_file), "--out", str(out), "--config", str(cfg)]) == 0
    capsys.readouterr()
    assert main(["verify", "--in", str(out), "--config", str(cfg)]) == 0
    assert main(["verify", "--in", str(out), "--config", str(cfg), "--variant", "apm"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": 1}))
    assert main(["verify", "--in", str(out), "--config", str(bad)]) == 2


def test_identify_and_codebook(tmp_path, latent_file, capsys):
    cb = tmp_path / "cb.bin"
    assert main(["codebook", "--count", "1000", "--bits", "128", "--seed", "3", "--out", str(cb)]) == 0
    from phasemark.stats import load_codebook
    msg = load_codebook(cb).message(250).to_hex()
    out = tmp_path / "o.pmlt"
    assert main(["embed", "--in", str(latent_file), "--out", str(out), "--message", msg]) == 0
    capsys.readouterr()
    assert main(["identify", "--in", str(out), "--codebook", str(cb), "--population", "1000000"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["user_id"] == 250 and doc["threshold"]["N"] == 10**6
    assert main(["identify", "--in", str(latent_file), "--codebook", str(cb)]) == 1


def test_image_codec_cli(tmp_path, capsys):
    from phasemark.tensor import ImageBuffer, save_image
    img = tmp_path / "in.png"
    save_image(ImageBuffer(np.clip(0.5 + 0.05 * np.random.default_rng(1).normal(size=(512, 512, 3)), 0, 1)), img)
    out = tmp_path / "out.png"
    args = ["--codec", "blockmean", "--channels", "3", "--variant", "ips", "--message", MSG[:24]]
    assert main(["embed", "--in", str(img), "--out", str(out), *args]) == 0
    capsys.readouterr()
    assert main(["verify", "--in", str(out), *args]) == 0


def test_plan_export(capsys):
    assert main(["plan"]) == 0
    a = capsys.readouterr().out
    assert main(["plan", "--key", "0"]) == 0
    assert capsys.readouterr().out == a and a.endswith("\n")
