"""Command line entry point: ``zbwm <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 corpus or file IO, 3 sidecar failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ..broken_arrows import DEFAULT_M as BA_M, DEFAULT_NC, DEFAULT_NF, BAKey, BrokenArrows, ba_keygen
from ..errors import ImageFormatError, SidecarError, ZbwmError
from ..imagecore import load_image, psnr, save_image
from ..sidecar import ENV_COMMAND, ExternalDecoder
from ..transforms.jpeg import quant_table
from ..zerobit import DEFAULT_M as ZB_M, MessageKey, SurrogateDecoder, Whitener, ZeroBitDetector
from .calibration import DEFAULT_ALPHAS, calibrate, calibrate_synthetic
from .config import FULL_SIZE, SMALL_SIZE, AttackSpec, ScenarioConfig, parse_config
from .report import write_report
from .runner import AttackContext, read_log, run_attack, run_scenario
from .schemes import scaled_nf

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SIDECAR = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --- keys ----------------------------------------------------------------------

def _save_message(bits: np.ndarray, path) -> None:
    Path(path).write_text("".join(str(int(b)) for b in bits) + "\n", encoding="ascii")


def _load_message(path) -> MessageKey:
    text = Path(path).read_text(encoding="ascii").strip()
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"{path} is not a 0/1 message file")
    return MessageKey(np.array([int(c) for c in text], dtype=np.uint8))


def _detector_from_args(args, shape):
    if args.scheme == "ba":
        return BrokenArrows(BAKey.load(args.key))
    key = _load_message(args.key)
    if args.scheme == "surrogate":
        dec = SurrogateDecoder(seed=args.decoder_seed, m=key.m, shape=shape)
    else:
        cmd = args.sidecar or os.environ.get(ENV_COMMAND)
        if not cmd:
            raise UsageError(f"external scheme needs --sidecar or ${ENV_COMMAND}")
        dec = ExternalDecoder(command=cmd, expected_m=key.m)
    whitener = Whitener.load(args.whitener) if args.whitener else Whitener.identity(key.m)
    return ZeroBitDetector(dec, whitener, key)


def cmd_keygen(args) -> int:
    if args.scheme == "ba":
        size = SMALL_SIZE if args.small else FULL_SIZE
        n_f = args.nf or (scaled_nf(size) if args.small else DEFAULT_NF)
        key = ba_keygen(args.seed, m=args.m or BA_M, n_f=n_f, n_c=args.nc or DEFAULT_NC)
        key.save(args.out)
        print(f"wrote Broken-Arrows key seed={key.seed} M={key.m} N_f={key.n_f} N_c={key.n_c} to {args.out}")
    else:
        key = MessageKey.random(np.random.default_rng(args.seed), args.m or ZB_M)
        _save_message(key.bits, args.out)
        print(f"wrote {key.m}-bit message to {args.out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    img = load_image(args.image)
    det = _detector_from_args(args, img.shape)
    if args.scheme == "external":
        raise UsageError("external decoders have no embedder")
    out = det.embed(img, args.psnr)
    save_image(out, args.out)
    print(json.dumps({"psnr": psnr(img, out), "log10_pvalue": det.detect(out).log10_value}))
    return EXIT_OK


def cmd_detect(args) -> int:
    img = load_image(args.image)
    det = _detector_from_args(args, img.shape)
    p = det.detect(img)
    print(json.dumps({"pvalue": p.value, "log10_pvalue": p.log10_value,
                      "detected": p.detected(args.alpha), "alpha": args.alpha}))
    return EXIT_OK


def _parse_params(items) -> tuple:
    params = {}
    for item in items or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise UsageError(f"attack parameter {item!r} is not key=value")
        params[k.strip()] = _auto(v.strip())
    return tuple(sorted(params.items()))


def _auto(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def cmd_attack(args) -> int:
    img = load_image(args.image)
    orig = load_image(args.orig) if args.orig else img
    det = _detector_from_args(args, img.shape)
    cfg = ScenarioConfig(detector={"ba": "broken_arrows"}.get(args.scheme, args.scheme), alpha=args.alpha,
                         purifier=args.purifier, decoder_seed=args.decoder_seed)
    spec = AttackSpec(args.name, _parse_params(args.param))
    rec = run_attack(spec, AttackContext(det, img, orig, args.alpha, args.seed, cfg))
    if args.out:
        save_image(rec.attacked, args.out)
    print(rec.to_json(Path(args.image).stem, args.seed))
    return EXIT_OK


_RUN_FLAGS = ("scenario", "detector", "alpha", "target_psnr", "corpus", "seed", "size", "limit", "m",
              "n_f", "n_c", "decoder_seed", "sidecar", "message", "purifier", "whitener",
              "cache_dir", "workers", "log")


def _run_overrides(args) -> dict:
    over = {k: getattr(args, k) for k in _RUN_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "small", False):
        over["size"] = SMALL_SIZE
    if "sidecar" not in over and os.environ.get(ENV_COMMAND) and over.get("detector") == "external":
        over["sidecar"] = os.environ[ENV_COMMAND]
    return {k: str(v) for k, v in over.items()}


def _config(args) -> ScenarioConfig:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config(text, _run_overrides(args), args.set or ())
    if not cfg.corpus:
        raise UsageError("no corpus given (config [run] corpus or --corpus)")
    return cfg


def cmd_bench(args) -> int:
    cfg = _config(args)
    if cfg.log is None:
        cfg.log = "results.jsonl"
    records = run_scenario(cfg)
    header, events = read_log(cfg.log)
    print(f"{len(records)} records written to {cfg.log} (config {header['config_hash']})")
    if args.report:
        for name, path in write_report(header, events, args.report).items():
            print(f"{name}: {path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else list(DEFAULT_ALPHAS)
    if args.synthetic:
        rep = calibrate_synthetic(args.m or ZB_M, args.synthetic, alphas, seed=int(args.seed or 0))
    else:
        rep = calibrate(_config(args), alphas, keys_per_image=args.keys_per_image)
    text = json.dumps(rep.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    header, events = read_log(args.log)
    for name, path in write_report(header, events, args.out, svg=not args.no_svg).items():
        print(f"{name}: {path}")
    return EXIT_OK


def dump_qtables(qualities) -> str:
    lines = []
    for q in qualities:
        lines.append(f"quality {q}")
        for row in quant_table(q):
            lines.append(" ".join(f"{int(v):3d}" for v in row))
    return "\n".join(lines)


# --- parser --------------------------------------------------------------------

def _scheme_args(p, with_key=True):
    p.add_argument("--scheme", choices=["ba", "surrogate", "external"], default="ba")
    if with_key:
        p.add_argument("--key", required=True, help="Broken-Arrows key file or 0/1 message file")
    p.add_argument("--decoder-seed", type=int, default=0)
    p.add_argument("--whitener", help="whitener .npz for decoder schemes")
    p.add_argument("--sidecar", help=f"external decoder command (default ${ENV_COMMAND})")
    p.add_argument("--alpha", type=float, default=1e-6)


def _run_args(p):
    p.add_argument("--config", help="INI scenario file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config value, e.g. attack:jpeg.quality=5")
    p.add_argument("--small", action="store_true", help="256x256 desk-scale profile")
    for flag in _RUN_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zbwm", description="Zero-bit watermark detection and attack benchmark")
    ap.add_argument("--dump-qtables", metavar="Q[,Q...]", help="print JPEG quantization tables and exit")
    sub = ap.add_subparsers(dest="cmd")

    p = sub.add_parser("keygen", help="draw a secret key")
    p.add_argument("--scheme", choices=["ba", "surrogate"], default="ba")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--small", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("embed", help="watermark an image")
    _scheme_args(p)
    p.add_argument("image")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--psnr", type=float, default=42.0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="p-value of an image")
    _scheme_args(p)
    p.add_argument("image")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("attack", help="run one attack on a watermarked image")
    _scheme_args(p)
    p.add_argument("name")
    p.add_argument("image")
    p.add_argument("--orig", help="original image (WIS reference)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--purifier", default="bicubic2x")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="run a scenario over a corpus")
    _run_args(p)
    p.add_argument("--report", metavar="DIR", help="also write the report into DIR")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate", help="false-alarm rates on unwatermarked images")
    _run_args(p)
    p.add_argument("--alphas", help="comma-separated levels")
    p.add_argument("--keys-per-image", type=int, default=10)
    p.add_argument("--synthetic", type=int, metavar="N", help="use N isotropic Gaussian vectors instead")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="curves, envelope and summary of a results log")
    p.add_argument("log")
    p.add_argument("--out", default="report")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.dump_qtables:
            print(dump_qtables([int(q) for q in args.dump_qtables.split(",")]))
            return EXIT_OK
        if args.cmd is None:
            ap.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.cmd == "calibrate" and args.m is not None:
            args.m = int(args.m)
        return args.func(args)
    except (SidecarError, TimeoutError) as exc:
        print(f"zbwm: sidecar failure: {exc}", file=sys.stderr)
        return EXIT_SIDECAR
    except (ImageFormatError, OSError) as exc:
        print(f"zbwm: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, ZbwmError) as exc:
        print(f"zbwm: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
