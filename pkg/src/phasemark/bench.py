"""Grid benchmark runner: detection rates, fidelity and latency per configuration.

A plan is a JSON object::

    {
      "seed": 0,
      "trials": 100,
      "corpus": {"kind": "gaussian" | "field" | "directory", "shape": [64, 64, 4],
                 "mean": 0.0, "scale": 1.0, "beta": 2.0, "path": "..."},
      "codec": {"name": "identity", "factor": 8},
      "band": {"crop_size": 44, "r_lo": 10, "r_hi": 18, "bits_per_channel": 32,
               "axis_offset_width": 2, "key": 0},
      "gamma": 0.8,
      "grid": {"variants": ["apm", "pcq", "ips", "sps"], "axis_offset": [true],
               "n_channels": [4], "realize_modes": ["restored"]},
      "attacks": [[], [{"kind": "noise", "sigma": 0.05, "domain": "latent"}]],
      "alpha": 0.01,
      "codebook": {"size": 1000000, "seed": 0},
      "population": null,
      "latency": {"repeats": 100},
      "export_dir": null
    }

Synthetic corpora draw item ``t`` from a seed derived from ``(seed, t)``
only, so every grid cell sees the same inputs, messages and attack noise
and cells can be compared pairwise. ``field`` draws a Gaussian random field
whose power falls as ``f**-beta`` (beta = 2 is the natural-image 1/f
amplitude law), normalized to unit variance per channel. For image codecs
the synthetic latent ``mean + scale * x`` is decoded into the input image.

An attack entry with ``"domain": "latent"`` is applied to the codec's latent
of the watermarked image (encode, attack, decode); otherwise attacks act on
whatever the pipeline produced.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks as atk
from .codec import IdentityCodec, make_codec
from .errors import PhaseMarkError
from .layout import BandConfig
from .modem import ModemParams, Variant
from .pipeline import PipelineConfig, embed, embed_latent, extract_latent, identify, verify
from .spectrum import RealizeMode
from .stats import Codebook, bonferroni_threshold, generate_codebook, threshold
from .tensor import ImageBuffer, LatentTensor, Message, latent_mse, load_image, load_latent, psnr, save_image, save_latent

CSV_COLUMNS = (
    "plan_hash", "variant", "n_channels", "axis_offset", "realize_mode", "attack",
    "trial", "ba", "psnr", "latent_mse", "embed_us", "detect_us",
)

DEFAULT_PLAN = {
    "seed": 0,
    "trials": 100,
    "corpus": {"kind": "gaussian", "shape": [64, 64, 4]},
    "codec": {"name": "identity", "factor": 8},
    "band": {},
    "gamma": 0.8,
    "grid": {"variants": ["apm", "pcq", "ips", "sps"], "axis_offset": [True],
             "n_channels": [4], "realize_modes": ["restored"]},
    "attacks": [[]],
    "alpha": 0.01,
    "codebook": {"size": 1_000_000, "seed": 0},
    "population": None,
    "latency": None,
    "export_dir": None,
}


def _seed(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def power_law_field(rng: np.random.Generator, shape, beta: float) -> np.ndarray:
    h, w, c = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    k = np.hypot(fy, fx)
    k[0, 0] = 1.0 / max(h, w)
    amp = k ** (-beta / 2.0)
    out = np.empty((h, w, c))
    for ch in range(c):
        x = np.fft.ifft2(np.fft.fft2(rng.normal(size=(h, w))) * amp).real
        out[:, :, ch] = (x - x.mean()) / x.std()
    return out


@dataclass
class BenchPlan:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "BenchPlan":
        merged = json.loads(json.dumps(DEFAULT_PLAN))
        for key, value in d.items():
            if key not in merged:
                raise ValueError(f"unknown plan key {key!r}")
            if isinstance(merged[key], dict) and isinstance(value, dict):
                merged[key].update(value)
            else:
                merged[key] = value
        plan = cls(merged)
        plan.validate()
        return plan

    @classmethod
    def load(cls, path) -> "BenchPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self):
        r = self.raw
        if int(r["trials"]) < 1:
            raise ValueError("trials must be >= 1")
        g = r["grid"]
        if not all(g.get(k) for k in ("variants", "axis_offset", "n_channels", "realize_modes")) or not r["attacks"]:
            raise ValueError("benchmark grid is empty")
        for v in g["variants"]:
            Variant(v)
        for m in g["realize_modes"]:
            RealizeMode(m)
        for chain in r["attacks"]:
            for a in chain:
                a = {k: v for k, v in a.items() if k != "domain"}
                atk.parse_attack(a)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def codec(self):
        c = self.raw["codec"]
        return make_codec(c["name"], int(c.get("factor", 8)))

    def cells(self):
        g = self.raw["grid"]
        return list(itertools.product(
            [Variant(v) for v in g["variants"]],
            [bool(a) for a in g["axis_offset"]],
            [int(n) for n in g["n_channels"]],
            [RealizeMode(m) for m in g["realize_modes"]],
            range(len(self.raw["attacks"])),
        ))

    def config(self, variant, axis_offset, n_channels, mode) -> PipelineConfig:
        band = BandConfig(**{**self.raw["band"], "n_channels": n_channels, "axis_offset_enabled": axis_offset})
        return PipelineConfig(band=band, variant=variant, params=ModemParams(gamma=float(self.raw["gamma"])),
                              codec=self.codec, realize_mode=mode)


class Corpus:
    def __init__(self, plan: BenchPlan):
        self.spec = plan.raw["corpus"]
        self.seed = int(plan.raw["seed"])
        self.codec = plan.codec
        self.files = None
        if self.spec["kind"] == "directory":
            root = Path(self.spec["path"])
            self.files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".pmlt", ".png", ".pgm", ".ppm"))
            if not self.files:
                raise ValueError(f"corpus directory {root} is empty")
        elif self.spec["kind"] not in ("gaussian", "field"):
            raise ValueError(f"unknown corpus kind {self.spec['kind']!r}")

    def __getitem__(self, t: int):
        if self.files is not None:
            p = self.files[t % len(self.files)]
            return load_latent(p) if p.suffix.lower() == ".pmlt" else load_image(p)
        rng = _seed(self.seed, 0, t)
        shape = tuple(self.spec.get("shape", (64, 64, 4)))
        image_codec = not isinstance(self.codec, IdentityCodec)
        mean = float(self.spec.get("mean", 0.5 if image_codec else 0.0))
        scale = float(self.spec.get("scale", 0.1 if image_codec else 1.0))
        if self.spec["kind"] == "gaussian":
            x = rng.normal(size=shape)
        else:
            x = power_law_field(rng, shape, float(self.spec.get("beta", 2.0)))
        lat = LatentTensor(mean + scale * x)
        return self.codec.decode(lat) if image_codec else lat


@dataclass
class BenchRecord:
    variant: str
    axis_offset: bool
    n_channels: int
    realize_mode: str
    attack: str
    ba: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    latent_mse: list = field(default_factory=list)
    embed_us: list = field(default_factory=list)
    detect_us: list = field(default_factory=list)
    verified: list = field(default_factory=list)
    identified: list = field(default_factory=list)
    clipping: list = field(default_factory=list)
    skipped_blocks: int = 0
    failures: int = 0
    errors: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.ba)

    @property
    def tpr_vrf(self) -> float:
        return sum(self.verified) / self.trials

    @property
    def tpr_idf(self) -> float:
        return sum(self.identified) / self.trials

    @staticmethod
    def _mean(xs):
        xs = [x for x in xs if not math.isnan(x)]
        return statistics.fmean(xs) if xs else math.nan

    def summary(self) -> dict:
        finite_psnr = [p for p in self.psnr if not math.isnan(p)]
        return {
            "variant": self.variant, "axis_offset": self.axis_offset, "n_channels": self.n_channels,
            "realize_mode": self.realize_mode, "attack": self.attack, "trials": self.trials,
            "failures": self.failures, "tpr_vrf": self.tpr_vrf, "tpr_idf": self.tpr_idf,
            "ba_mean": self._mean(self.ba),
            "psnr_mean": statistics.fmean(finite_psnr) if finite_psnr else None,
            "latent_mse_mean": self._mean(self.latent_mse),
            "embed_us_median": statistics.median(self.embed_us) if self.embed_us else None,
            "detect_us_median": statistics.median(self.detect_us) if self.detect_us else None,
            "clipping_fraction_mean": self._mean(self.clipping),
            "skipped_blocks": self.skipped_blocks,
            "errors": self.errors[:5],
        }


def _apply_chain(y, chain, codec, seed_parts, trial_id):
    for j, a in enumerate(chain):
        spec = atk.parse_attack({k: v for k, v in a.items() if k != "domain"})
        seed = int(_seed(*seed_parts, j).integers(0, 2**63))
        if a.get("domain") == "latent" and isinstance(y, ImageBuffer):
            lat = atk.apply(codec.encode(y), spec, seed=seed, trial_id=trial_id)
            y = codec.decode(lat)
        else:
            y = atk.apply(y, spec, align=getattr(codec, "factor", 1), seed=seed, trial_id=trial_id)
    return y


def _fidelity(x, y, codec) -> tuple[float, float]:
    if isinstance(x, ImageBuffer):
        return psnr(x, y), latent_mse(codec.encode(x), codec.encode(y))
    return math.nan, latent_mse(x, y)


def measure_latency(cfg: PipelineConfig | None = None, repeats: int = 100, codebook: Codebook | None = None,
                    seed: int = 0) -> dict:
    """Median wall time of the watermark transform on a 64x64x4 latent."""
    cfg = cfg or PipelineConfig()
    rng = np.random.default_rng(seed)
    lat = LatentTensor(rng.normal(size=(64, 64, max(4, cfg.band.n_channels))))
    msg = Message.random(cfg.message_length, rng)
    marked, _ = embed_latent(lat, msg, cfg)
    for _ in range(5):
        embed_latent(lat, msg, cfg)
        extract_latent(marked, cfg)
    emb, det = [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        embed_latent(lat, msg, cfg)
        t1 = time.perf_counter()
        extract_latent(marked, cfg)
        t2 = time.perf_counter()
        emb.append(t1 - t0)
        det.append(t2 - t1)
    out = {"repeats": repeats, "embed_ms_median": 1e3 * statistics.median(emb),
           "detect_ms_median": 1e3 * statistics.median(det)}
    if codebook is not None:
        q = extract_latent(marked, cfg)[0]
        ident = []
        for _ in range(max(3, min(repeats, 10))):
            t0 = time.perf_counter()
            codebook.match(q)
            ident.append(time.perf_counter() - t0)
        out["identify_ms_median"] = 1e3 * statistics.median(ident)
        out["codebook_size"] = len(codebook)
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else ("inf" if math.isinf(x) else repr(x))
    return str(x)


def run_benchmark(plan: BenchPlan | dict, out_dir: str | os.PathLike | None = None) -> dict:
    """Run every grid cell; returns the summary and writes CSV/JSON when ``out_dir`` is set."""
    if isinstance(plan, dict):
        plan = BenchPlan.from_dict(plan)
    r = plan.raw
    seed, trials, alpha = int(r["seed"]), int(r["trials"]), float(r["alpha"])
    corpus = Corpus(plan)
    codec = plan.codec
    cb_size = int(r["codebook"]["size"])
    cb_seed = int(r["codebook"].get("seed", 0))
    population = int(r["population"] or cb_size)
    codebooks: dict[int, Codebook] = {}
    export = Path(r["export_dir"]) if r["export_dir"] else None
    if export:
        export.mkdir(parents=True, exist_ok=True)

    rows, records, manifest = [], [], []
    inputs = [corpus[t] for t in range(trials)]
    for cell_idx, (variant, ao, nc, mode, ai) in enumerate(plan.cells()):
        cfg = plan.config(variant, ao, nc, mode)
        L = cfg.message_length
        if L not in codebooks:
            codebooks[L] = generate_codebook(cb_size, L, cb_seed)
        cb = codebooks[L]
        chain = r["attacks"][ai]
        label = atk.chain_label([atk.parse_attack({k: v for k, v in a.items() if k != "domain"}) for a in chain])
        label += "@latent" if any(a.get("domain") == "latent" for a in chain) else ""
        rec = BenchRecord(variant.value, ao, nc, mode.value, label)
        for t in range(trials):
            x = inputs[t]
            user = int(_seed(seed, 1, t).integers(0, len(cb)))
            msg = cb.message(user)
            trial_id = f"c{cell_idx:03d}_t{t:05d}"
            try:
                t0 = time.perf_counter()
                y, diag = embed(x, msg, cfg)
                embed_us = 1e6 * (time.perf_counter() - t0)
                if export:
                    name = f"{trial_id}.{'png' if isinstance(y, ImageBuffer) else 'pmlt'}"
                    (save_image if isinstance(y, ImageBuffer) else save_latent)(y, export / name)
                    manifest.append({"trial_id": trial_id, "file": name, "user_id": user, "message": msg.to_hex()})
                p, lm = _fidelity(x, y, codec)
                ya = _apply_chain(y, chain, codec, (seed, 2, t), trial_id)
                t1 = time.perf_counter()
                vr = verify(ya, msg, cfg, alpha)
                detect_us = 1e6 * (time.perf_counter() - t1)
                ir = identify(ya, cb, cfg, alpha, population)
            except (PhaseMarkError, OSError) as exc:
                # failed trials stay in the table as non-detections
                rec.failures += 1
                rec.errors.append(f"trial {t}: {exc}")
                rec.ba.append(math.nan)
                rec.psnr.append(math.nan)
                rec.latent_mse.append(math.nan)
                rec.verified.append(False)
                rec.identified.append(False)
                rows.append([plan.hash, variant.value, nc, int(ao), mode.value, label, t,
                             "nan", "nan", "nan", "nan", "nan"])
                continue
            rec.ba.append(vr.bit_accuracy)
            rec.psnr.append(p)
            rec.latent_mse.append(lm)
            rec.embed_us.append(embed_us)
            rec.detect_us.append(detect_us)
            rec.verified.append(vr.decision)
            rec.identified.append(ir.decision and ir.user_id == user)
            rec.clipping.append(diag.clipping_fraction)
            rec.skipped_blocks += diag.skipped_blocks
            rows.append([plan.hash, variant.value, nc, int(ao), mode.value, label, t,
                         _fmt(vr.bit_accuracy), _fmt(p), _fmt(lm), f"{embed_us:.1f}", f"{detect_us:.1f}"])
        records.append(rec)

    thresholds = {}
    for L in sorted(codebooks):
        thresholds[str(L)] = {"vrf": threshold(L, alpha).to_dict(),
                              "idf": bonferroni_threshold(L, alpha, population).to_dict()}
    summary = {"plan_hash": plan.hash, "thresholds": thresholds,
               "cells": [rec.summary() for rec in records]}
    if r["latency"]:
        lat_cfg = PipelineConfig(variant=plan.cells()[0][0])
        summary["latency"] = measure_latency(
            lat_cfg, int(r["latency"].get("repeats", 100)),
            codebooks.get(lat_cfg.message_length) or generate_codebook(cb_size, lat_cfg.message_length, cb_seed),
            seed=seed,
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(rows)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if "latency" in summary:
            with open(out / "latency.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["metric", "value"])
                for k, v in summary["latency"].items():
                    w.writerow([k, _fmt(v)])
        if export:
            with open(export / "manifest.json", "w") as fh:
                json.dump(manifest, fh, indent=2)
                fh.write("\n")
    summary["records"] = records
    return summary
