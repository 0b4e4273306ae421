"""Command-line interface.

Exit status: 0 = success / watermark detected, 1 = not detected,
2 = usage or I/O error (with a one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import BenchPlan, run_benchmark
from .codec import CODEC_NAMES, make_codec
from .errors import PhaseMarkError
from .layout import BandConfig, build_plan
from .modem import ModemParams, Variant
from .pipeline import PipelineConfig, embed, identify, verify
from .spectrum import RealizeMode
from .stats import bonferroni_threshold, generate_codebook, load_codebook, save_codebook
from .tensor import ImageBuffer, Message, load_image, load_latent, save_image, save_latent

# flag name -> default, for options that may also come from --config
PIPELINE_DEFAULTS = {
    "variant": "apm",
    "key": 0,
    "codec": "identity",
    "factor": 8,
    "channels": 4,
    "bits_per_channel": 32,
    "band": "10:18",
    "crop": 44,
    "axis_offset_width": 2.0,
    "no_axis_offset": False,
    "cutoff_imaginary": False,
    "gamma": 0.8,
    "alpha": 0.01,
    "search": 0,
    "message": None,
    "population": None,
}


class UsageError(Exception):
    pass


def _add_pipeline_args(p: argparse.ArgumentParser, detect: bool):
    p.add_argument("--in", dest="input", required=True, help="input .pmlt latent or PNG/PGM/PPM image")
    p.add_argument("--config", help="JSON file whose keys mirror these flags; flags win")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--key", type=lambda s: int(s, 0), help="unsigned 64-bit block-layout key")
    p.add_argument("--message", help="hex message (reference message for verify)")
    p.add_argument("--codec", choices=CODEC_NAMES)
    p.add_argument("--factor", type=int, help="codec downsampling factor (default 8)")
    p.add_argument("--channels", type=int, help="latent channels carrying payload")
    p.add_argument("--bits-per-channel", type=int)
    p.add_argument("--band", help="radial band LO:HI in frequency bins (default 10:18)")
    p.add_argument("--crop", type=int, help="center crop size (default 44)")
    p.add_argument("--axis-offset-width", type=float)
    p.add_argument("--no-axis-offset", action="store_true", default=None)
    p.add_argument("--cutoff-imaginary", action="store_true", default=None)
    p.add_argument("--gamma", type=float, help="SPS interpolation strength")
    if detect:
        p.add_argument("--alpha", type=float, help="false-positive level (default 0.01)")
        p.add_argument("--search", type=int, help="translation search radius in latent bins")


def _options(args) -> dict:
    opts = dict(PIPELINE_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(opts)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(cfg)
    for k in opts:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _pipeline_config(opts: dict) -> PipelineConfig:
    try:
        lo, hi = (float(x) for x in str(opts["band"]).split(":"))
    except ValueError as exc:
        raise UsageError(f"--band must look like LO:HI, got {opts['band']!r}") from exc
    band = BandConfig(
        crop_size=int(opts["crop"]), r_lo=lo, r_hi=hi,
        bits_per_channel=int(opts["bits_per_channel"]), n_channels=int(opts["channels"]),
        axis_offset_enabled=not opts["no_axis_offset"], axis_offset_width=float(opts["axis_offset_width"]),
        key=int(opts["key"]),
    )
    return PipelineConfig(
        band=band, variant=Variant(opts["variant"]), params=ModemParams(gamma=float(opts["gamma"])),
        codec=make_codec(opts["codec"], int(opts["factor"])),
        realize_mode=RealizeMode.CUTOFF_IMAGINARY if opts["cutoff_imaginary"] else RealizeMode.FREQUENCY_RESTORED,
        translation_search=int(opts["search"] or 0),
    )


def _read(path: str):
    return load_latent(path) if Path(path).suffix.lower() == ".pmlt" else load_image(path)


def _write(x, path: str):
    if isinstance(x, ImageBuffer):
        save_image(x, path)
    else:
        save_latent(x, path)


def _message(opts: dict, cfg: PipelineConfig) -> Message:
    if not opts["message"]:
        raise UsageError("--message is required")
    return Message.from_hex(opts["message"], cfg.message_length)


def cmd_embed(args) -> int:
    opts = _options(args)
    cfg = _pipeline_config(opts)
    msg = _message(opts, cfg)
    out, diag = embed(_read(args.input), msg, cfg)
    _write(out, args.out)
    print(json.dumps({"output": args.out, "bits": len(msg), "message": msg.to_hex(),
                      "diagnostics": diag.to_dict()}, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    opts = _options(args)
    cfg = _pipeline_config(opts)
    report = verify(_read(args.input), _message(opts, cfg), cfg, float(opts["alpha"]))
    print(report.to_json())
    return 0 if report.decision else 1


def cmd_identify(args) -> int:
    opts = _options(args)
    cfg = _pipeline_config(opts)
    cb = load_codebook(args.codebook)
    report = identify(_read(args.input), cb, cfg, float(opts["alpha"]),
                      int(opts["population"]) if opts["population"] else None)
    print(report.to_json())
    return 0 if report.decision else 1


def cmd_threshold(args) -> int:
    spec = bonferroni_threshold(args.bits, args.alpha, args.population)
    print(json.dumps(spec.to_dict(), sort_keys=True))
    return 0


def cmd_plan(args) -> int:
    opts = _options(args)
    sys.stdout.write(build_plan(_pipeline_config(opts).band).to_json())
    return 0


def cmd_codebook(args) -> int:
    cb = generate_codebook(args.count, args.bits, args.seed)
    save_codebook(cb, args.out)
    print(json.dumps({"output": args.out, "N": len(cb), "L": cb.n_bits, "seed": cb.seed}, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    summary = run_benchmark(BenchPlan.load(args.plan), args.out_dir)
    summary.pop("records")
    print(json.dumps(summary, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasemark", description="Latent phase watermarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a message")
    _add_pipeline_args(p, detect=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("verify", help="check for a known message")
    _add_pipeline_args(p, detect=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("identify", help="find the closest user in a codebook")
    _add_pipeline_args(p, detect=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--population", type=int)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("threshold", help="print the exact detection threshold")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--population", type=int, default=1)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("plan", help="export the block plan as JSON")
    p.add_argument("--config")
    for flag in ("--key", "--channels", "--bits-per-channel", "--crop"):
        p.add_argument(flag, type=lambda s: int(s, 0))
    p.add_argument("--band")
    p.add_argument("--axis-offset-width", type=float)
    p.add_argument("--no-axis-offset", action="store_true", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("codebook", help="generate a deterministic codebook file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("bench", help="run a benchmark plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, PhaseMarkError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"phasemark: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
