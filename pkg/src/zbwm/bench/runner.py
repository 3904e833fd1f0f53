"""Scenario execution: embed, verify, attack, log.

The results log is JSON lines. The first line is a header carrying the config
and its hash; every later line is one event (``record``, ``embedding_failure``
or ``sidecar_failure``), written in image order and flushed as it is produced.
Nothing time-dependent is logged, so a fixed config and seed give a
byte-identical log.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..attacks.cgba import MASK_FRACTION, cgba_attack
from ..attacks.ddn import ddn_attack
from ..attacks.handle import DetectorHandle, finish
from ..attacks.oracle import oracle_gradient_attack, wis_attack
from ..attacks.valuemetric import valuemetric
from ..broken_arrows import ba_optimal_attack
from ..errors import SidecarError, ZbwmError
from ..imagecore import psnr
from ..records import AttackRecord
from ..transforms.dct import build_lowfreq_mask
from ..zerobit import SurrogateDecoder, Whitener, ZeroBitDetector, MessageKey
from .config import AttackSpec, ScenarioConfig
from .corpus import Corpus
from .schemes import Scheme, make_purifier

VALUEMETRIC_PARAM = {"jpeg": "quality", "gamma": "g", "sharpen": "amount", "purify": "steps"}


@dataclass
class AttackContext:
    detector: object
    img_wm: np.ndarray
    img_orig: np.ndarray
    alpha: float
    seed: int
    cfg: ScenarioConfig
    scheme: Scheme | None = field(default=None, repr=False)

    @property
    def purifier(self):
        return self.scheme.purifier() if self.scheme is not None else make_purifier(self.cfg.purifier)


def _transfer_oracle(ctx: AttackContext):
    """An independent surrogate with its own key: a control with no shared secret."""
    h, w, c = ctx.img_wm.shape
    m = getattr(ctx.detector, "m", 256)
    dec = SurrogateDecoder(seed=ctx.cfg.decoder_seed + 1, m=m, shape=(h, w, c))
    key = MessageKey.random(np.random.default_rng(ctx.seed), m)
    return ZeroBitDetector(dec, Whitener.identity(m), key)


def run_attack(spec: AttackSpec, ctx: AttackContext) -> AttackRecord:
    kw = spec.kwargs()
    name = spec.name
    x = ctx.img_wm
    if name in ("identity", *VALUEMETRIC_PARAM):
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=0)
        param = kw.get(VALUEMETRIC_PARAM.get(name, ""), None)
        if name != "identity" and param is None:
            raise ValueError(f"{name} needs parameter {VALUEMETRIC_PARAM[name]!r}")
        pur = ctx.purifier if name == "purify" else None
        return valuemetric(handle, x, name, param, purifier=pur)
    if name == "noise":
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=0)
        noise = np.random.default_rng(ctx.seed).random(x.shape)
        return finish("noise", handle, x, noise)
    if name == "ddn":
        q = int(kw.get("q", 250))
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=q)
        return ddn_attack(handle, x, q, gamma=float(kw.get("gamma", 0.05)),
                          step_fraction=float(kw.get("step_fraction", 0.1)),
                          init_psnr=float(kw.get("init_psnr", 42.0)))
    if name == "ba_optimal":
        margin = kw.get("margin")
        return ba_optimal_attack(x, ctx.detector.key, margin=None if margin is None else float(margin),
                                 alpha=ctx.alpha)
    if name == "cgba":
        q = int(kw.get("q", 2000))
        h, w = x.shape[:2]
        mask = build_lowfreq_mask(h, w, float(kw.get("fraction", MASK_FRACTION)))
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=q, white_box=False)
        return cgba_attack(handle, x, q, mask=mask, seed=ctx.seed)
    if name == "wis":
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=0)
        return wis_attack(x, ctx.img_orig, ctx.purifier, handle, beta=float(kw.get("beta", 32.0)),
                          grid=int(kw.get("grid", 32)), seed=ctx.seed)
    if name == "oracle_gradient":
        which = kw.get("oracle", "self")
        if which == "self":
            oracle = ctx.detector
        elif which == "transfer":
            oracle = _transfer_oracle(ctx)
        else:
            raise ValueError(f"unknown oracle {which!r}")
        handle = DetectorHandle(ctx.detector, ctx.alpha, budget=0)
        return oracle_gradient_attack(oracle, x, int(kw.get("q", 250)), float(kw.get("step", 1e-3)), handle)
    raise ValueError(f"unknown attack {name!r}")


def _attack_seed(run_seed: int, idx: int, j: int) -> int:
    return int(np.random.SeedSequence([int(run_seed), int(idx), int(j) + 1]).generate_state(1)[0])


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def process_image(cfg: ScenarioConfig, scheme: Scheme, corpus: Corpus, idx: int,
                  keep_images: bool = False) -> tuple[list[dict], list[AttackRecord]]:
    """All attacks on one image. Returns (log events, records)."""
    image_id = corpus.image_id(idx)
    entries, records = [], []
    try:
        orig = corpus.load(idx)
        det = scheme.detector(idx)
        wm = det.embed(orig, cfg.target_psnr) if scheme.embeds else orig
        p0 = det.detect(wm)
        if not p0.detected(cfg.alpha):
            entries.append({"event": "embedding_failure", "image": image_id,
                            "log10_pvalue": _finite(p0.log10_value)})
            return entries, records
        embed_psnr = psnr(orig, wm)
        for j, spec in enumerate(cfg.attacks):
            seed = _attack_seed(cfg.seed, idx, j)
            ctx = AttackContext(det, wm, orig, cfg.alpha, seed, cfg, scheme)
            rec = run_attack(spec, ctx)
            rec.attack_name = spec.label
            entry = rec.log_entry(image_id, seed)
            entry.update(event="record", embed_psnr=_finite(embed_psnr))
            entries.append(entry)
            if not keep_images:
                rec.attacked = None
            rec.extras.setdefault("image", image_id)
            records.append(rec)
    except SidecarError as exc:
        entries.append({"event": "sidecar_failure", "image": image_id, "error": str(exc)})
    return entries, records


def _finite(x: float):
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


_WORKER = {}


def _worker_init(cfg, whitener):
    corpus = Corpus.from_dir(cfg.corpus, cfg.size, cfg.limit)
    scheme = Scheme(cfg, corpus)
    scheme._whitener = whitener
    _WORKER.update(cfg=cfg, corpus=corpus, scheme=scheme)


def _worker_job(args):
    idx, keep = args
    return process_image(_WORKER["cfg"], _WORKER["scheme"], _WORKER["corpus"], idx, keep)


def header(cfg: ScenarioConfig) -> dict:
    return {"event": "header", "config_hash": cfg.digest(), "config": cfg.result_dict(),
            "version": __version__}


def run_scenario(cfg: ScenarioConfig, keep_images: bool = False, log=None) -> list[AttackRecord]:
    """Run every attack of ``cfg`` on every corpus image.

    Records are returned in image order (attacked images dropped unless
    ``keep_images``). The log goes to ``log`` (path or text stream), defaulting
    to ``cfg.log``.
    """
    cfg.validate()
    if not cfg.attacks:
        raise ValueError("no attacks configured")
    corpus = Corpus.from_dir(cfg.corpus, cfg.size, cfg.limit)
    scheme = Scheme(cfg, corpus)
    target = log if log is not None else cfg.log
    own = isinstance(target, str) or hasattr(target, "__fspath__")
    stream = open(target, "w", encoding="utf-8") if own else target
    records: list[AttackRecord] = []
    try:
        def emit(obj):
            if stream is not None:
                stream.write(_dump(obj) + "\n")
                stream.flush()

        emit(header(cfg))
        if cfg.workers == 1 or len(corpus) == 1:
            results = (process_image(cfg, scheme, corpus, i, keep_images) for i in range(len(corpus)))
            for entries, recs in results:
                for e in entries:
                    emit(e)
                records.extend(recs)
        else:
            whitener = scheme.whitener() if cfg.detector == "surrogate" else None
            with ProcessPoolExecutor(cfg.workers, initializer=_worker_init,
                                     initargs=(cfg, whitener)) as pool:
                for entries, recs in pool.map(_worker_job, [(i, keep_images) for i in range(len(corpus))]):
                    for e in entries:
                        emit(e)
                    records.extend(recs)
    finally:
        scheme.close()
        if own:
            stream.close()
    return records


def read_log(path) -> tuple[dict, list[dict]]:
    """(header, events) of a results log."""
    with open(path, encoding="utf-8") as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("event") != "header":
        raise ZbwmError(f"{path} is not a results log (missing header)")
    return lines[0], lines[1:]
