"""Command-line interface.

Subcommands::

    wavehdr synth      generate a synthetic LDR/HDR dataset
    wavehdr mask       apply dual-domain masking to a scene's frames
    wavehdr pretrain   phase-1 masked-reconstruction pretraining
    wavehdr finetune   phase-2 LDR->HDR fine-tuning
    wavehdr eval       run a checkpoint over a dataset and report metrics
    wavehdr gradcheck  audit analytic gradients against finite differences

Configuration: every command has a flat key set with defaults; values come
from (lowest to highest precedence) the defaults, an optional ``--config``
JSON file, and per-key command-line flags.  Unknown config keys are
rejected.  The fully resolved configuration is echoed to
``<out>/config.json`` so runs are self-describing.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure
(non-finite loss or a failed gradient audit).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from wavehdr import data as D
from wavehdr import gradcheck as G
from wavehdr import losses as L
from wavehdr import metrics
from wavehdr import model as M
from wavehdr import pfm
from wavehdr import tensor as T
from wavehdr import training as TR
from wavehdr import wavelet as W
from wavehdr.backend import active_backend
from wavehdr.errors import ConfigError, NumericalError, WaveHdrError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


# ---------------------------------------------------------------- config plumbing

_MODEL_KEYS = {
    "channels": 8,
    "num_resblocks": 6,
    "groups": 3,
    "temporal_kernel": 3,
    "memory_len": 2,
}

_TRAIN_KEYS = {
    "total_steps": 200,
    "base_lr": 2e-4,
    "lr_halving_period": 0,
    "beta1": 0.9,
    "beta2": 0.99,
    "eps": 1e-8,
    "frames_per_clip": 2,
    "patch_size": 16,
    "patch_stride": 8,
    "val_interval": 0,
    "seed": 0,
}

_MASK_KEYS = {
    "wavelet": "haar",
    "depth": 3,
    "cell_h": 1,
    "cell_w": 1,
}

DEFAULTS: dict[str, dict] = {
    "synth": {
        "num_scenes": 4,
        "frames_per_scene": 8,
        "height": 32,
        "width": 32,
        "seed": 0,
    },
    "mask": {
        **_MASK_KEYS,
        "ratio": 0.5,
        "seed": 0,
        "stream": "ldr",
    },
    "pretrain": {
        **_MODEL_KEYS, **_TRAIN_KEYS, **_MASK_KEYS,
        "max_ratio": 0.5,
    },
    "finetune": {
        **_MODEL_KEYS, **_TRAIN_KEYS,
        "use_tmoe": True,
        "use_dmm": True,
        "ssim_weight": 1.0,
    },
    "eval": {
        "frames_per_clip": 2,
        "peak_nits": 1000.0,
        "dump_frames": False,
    },
    "gradcheck": {
        "seed": 0,
        "tolerance": G.DEFAULT_TOL,
        "step": G.DEFAULT_STEP,
        "inject_fault": False,
        "scope": "all",
    },
}


def _add_config_flags(sub: argparse.ArgumentParser, command: str) -> None:
    sub.add_argument("--config", metavar="JSON",
                     help="JSON file of config keys (flags still override)")
    for key, default in DEFAULTS[command].items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            sub.add_argument(flag, dest=key, type=_parse_bool, default=None,
                             metavar="BOOL", help=f"default {default}")
        else:
            sub.add_argument(flag, dest=key, type=type(default), default=None,
                             help=f"default {default!r}")


def _resolve_config(command: str, args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags, rejecting unknown keys."""
    cfg = dict(DEFAULTS[command])
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(
                f"{path}: unknown config keys {sorted(unknown)}; "
                f"valid keys: {sorted(cfg)}")
        for key, value in loaded.items():
            want = type(cfg[key])
            if want in (int, float) and isinstance(value, (int, float)) \
                    and not isinstance(value, bool):
                cfg[key] = want(value)
            elif isinstance(value, want):
                cfg[key] = value
            else:
                raise ConfigError(
                    f"{path}: key {key!r} expects {want.__name__}, "
                    f"got {type(value).__name__}")
    for key in DEFAULTS[command]:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _echo_config(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **cfg}
    (out_dir / "config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _model_config(cfg: dict, use_tmoe: bool = True, use_dmm: bool = True
                  ) -> M.ModelConfig:
    return M.ModelConfig(
        channels=cfg["channels"], num_resblocks=cfg["num_resblocks"],
        groups=cfg["groups"], temporal_kernel=cfg["temporal_kernel"],
        memory_len=cfg["memory_len"],
        use_tmoe=cfg.get("use_tmoe", use_tmoe),
        use_dmm=cfg.get("use_dmm", use_dmm))


def _train_config(cfg: dict) -> TR.TrainConfig:
    return TR.TrainConfig(
        total_steps=cfg["total_steps"], base_lr=cfg["base_lr"],
        lr_halving_period=cfg["lr_halving_period"], beta1=cfg["beta1"],
        beta2=cfg["beta2"], eps=cfg["eps"],
        frames_per_clip=cfg["frames_per_clip"], patch_size=cfg["patch_size"],
        patch_stride=cfg["patch_stride"], val_interval=cfg["val_interval"],
        seed=cfg["seed"])


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = _resolve_config("synth", args)
    out = Path(args.out)
    scenes = D.generate_dataset(D.SynthConfig(
        num_scenes=cfg["num_scenes"], frames_per_scene=cfg["frames_per_scene"],
        height=cfg["height"], width=cfg["width"], seed=cfg["seed"]))
    _echo_config(out, "synth", cfg)
    D.write_dataset_dir(out, scenes)
    total = sum(s.num_frames for s in scenes)
    print(f"wrote {len(scenes)} scenes / {total} frames to {out}")
    return EXIT_OK


def cmd_mask(args) -> int:
    cfg = _resolve_config("mask", args)
    if cfg["stream"] not in ("ldr", "hdr"):
        raise ConfigError(f"stream must be ldr or hdr, got {cfg['stream']!r}")
    scene = D.load_scene_dir(args.data)
    frames = scene.ldr if cfg["stream"] == "ldr" else scene.hdr
    fb = W.filter_bank(cfg["wavelet"])
    out = Path(args.out)
    _echo_config(out, "mask", cfg)
    masked_dir = out / "masked"
    mask_dir = out / "mask"
    masked_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    energy_rows = []
    for t in range(frames.shape[0]):
        mcfg = W.MaskConfig(depth=cfg["depth"], low_freq_ratio=cfg["ratio"],
                            mask_cell=(cfg["cell_h"], cfg["cell_w"]),
                            seed=cfg["seed"] + t)
        result = W.apply_wmim(frames[t].astype(np.float64), mcfg, fb)
        pfm.save_pfm(masked_dir / f"{t:04d}.pfm", result.frame.astype(np.float32))
        pfm.save_pfm(mask_dir / f"{t:04d}.pfm",
                     result.mask.astype(np.float32))
        pyr = W.dwt2d_multi(
            W._pad_to_multiple(frames[t].astype(np.float64), 2 ** cfg["depth"]),
            fb, cfg["depth"])
        for band, energy in W.band_energies(pyr).items():
            energy_rows.append((t, band, energy))
    TR.write_tsv(out / "band_energies.tsv", ["frame", "band", "energy"],
                 energy_rows)
    print(f"masked {frames.shape[0]} {cfg['stream']} frames of {scene.scene_id} "
          f"-> {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _resolve_config("pretrain", args)
    scenes = D.load_dataset_dir(args.data)
    out = Path(args.out)
    _echo_config(out, "pretrain", cfg)
    fb = W.filter_bank(cfg["wavelet"])
    mask_cfg = W.MaskConfig(depth=cfg["depth"], low_freq_ratio=0.0,
                            mask_cell=(cfg["cell_h"], cfg["cell_w"]), seed=0)
    sched = W.CurriculumSchedule(total_steps=cfg["total_steps"],
                                 max_ratio=cfg["max_ratio"])
    params, rows = TR.train_phase1(
        scenes, _model_config(cfg), _train_config(cfg), mask_cfg, sched, fb,
        out_dir=out)
    first, last = rows[0][3], rows[-1][3]
    print(f"phase 1 done: {len(rows)} steps, loss {first:.6g} -> {last:.6g}, "
          f"checkpoint in {out / 'checkpoint'}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _resolve_config("finetune", args)
    scenes = D.load_dataset_dir(args.data)
    val_scenes = D.load_dataset_dir(args.val_data) if args.val_data else None
    pretrained = M.load_checkpoint(args.init) if args.init else None
    out = Path(args.out)
    _echo_config(out, "finetune", cfg)
    params, store, history = TR.train_phase2(
        scenes, _model_config(cfg), _train_config(cfg),
        L.LossConfig(ssim_weight=cfg["ssim_weight"]),
        pretrained=pretrained, val_scenes=val_scenes, out_dir=out)
    rows = history["rows"]
    msg = (f"phase 2 done: {len(rows)} steps over {history['epochs']} epochs, "
           f"loss {rows[0][3]:.6g} -> {rows[-1][3]:.6g}")
    if history["val_rows"]:
        msg += f", best val PSNR {history['best_psnr']:.4f} dB"
    print(msg + f", checkpoints in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config("eval", args)
    params = M.load_checkpoint(args.checkpoint)
    scenes = D.load_dataset_dir(args.data)
    out = Path(args.out)
    _echo_config(out, "eval", cfg)

    rows = []
    sums: dict[str, list[float]] = {"psnr": [], "ssim": [], "delta_e_itp": []}
    nclip = cfg["frames_per_clip"]
    with T.no_grad():
        for scene in scenes:
            store = M.MemoryStore(params.config.memory_len)
            preds = []
            t0 = 0
            while t0 < scene.num_frames:
                t1 = min(t0 + nclip, scene.num_frames)
                x = D.hwc_to_chw(scene.ldr[t0:t1].astype(np.float64))
                preds.append(M.phase2_forward(x, scene.scene_id, store,
                                              params).data)
                t0 = t1
            pred = D.chw_to_hwc(np.concatenate(preds, axis=0))
            if cfg["dump_frames"]:
                dump = out / "frames" / scene.scene_id
                dump.mkdir(parents=True, exist_ok=True)
                for t in range(pred.shape[0]):
                    pfm.save_pfm(dump / f"{t:04d}.pfm",
                                 pred[t].astype(np.float32))
            peak = float(scene.hdr.max(initial=1.0))
            for t in range(pred.shape[0]):
                gt = scene.hdr[t].astype(np.float64)
                pr = pred[t]
                frame_psnr = metrics.psnr(pr, gt, peak=peak)
                frame_ssim = metrics.ssim_windowed(pr, gt)
                frame_de = metrics.delta_e_itp(pr, gt,
                                               peak_nits=cfg["peak_nits"])
                rows.append((scene.scene_id, t, frame_psnr, frame_ssim,
                             frame_de,
                             metrics.gamut_hull_area(pr),
                             metrics.gamut_hull_area(gt)))
                sums["psnr"].append(frame_psnr)
                sums["ssim"].append(frame_ssim)
                sums["delta_e_itp"].append(frame_de)
    TR.write_tsv(out / "metrics.tsv",
                 ["scene", "frame", "psnr", "ssim", "delta_e_itp",
                  "gamut_pred", "gamut_gt"], rows)
    summary = {name: float(np.mean(vals)) for name, vals in sums.items()}
    summary["frames"] = len(rows)
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print("  ".join(f"{k} {v:.4f}" for k, v in sorted(summary.items())
                    if k != "frames"))
    print(f"per-frame metrics in {out / 'metrics.tsv'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _resolve_config("gradcheck", args)
    if cfg["scope"] not in ("all", "ops", "model"):
        raise ConfigError(f"scope must be all/ops/model, got {cfg['scope']!r}")
    out = Path(args.out)
    _echo_config(out, "gradcheck", cfg)
    kw = dict(seed=cfg["seed"], h=cfg["step"], tol=cfg["tolerance"],
              inject_fault=cfg["inject_fault"])
    rows = []
    failed = False
    if cfg["scope"] in ("all", "ops"):
        results = G.audit_ops(**kw)
        rows += [("op", r.name, r.max_rel_err, "pass" if r.passed else "FAIL")
                 for r in results]
        p, n, worst = G.summarize(results)
        failed |= p < n
        print(f"ops:    {p}/{n} pass, worst {worst:.3e}")
    if cfg["scope"] in ("all", "model"):
        results = G.audit_model(**kw)
        rows += [("param", r.name, r.max_rel_err,
                  "pass" if r.passed else "FAIL") for r in results]
        p, n, worst = G.summarize(results)
        failed |= p < n
        print(f"params: {p}/{n} pass, worst {worst:.3e}")
    TR.write_tsv(out / "gradcheck.tsv",
                 ["kind", "name", "max_rel_err", "status"], rows)
    if failed:
        print("gradient audit FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("gradient audit passed")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> _Parser:
    parser = _Parser(prog="wavehdr",
                     description="HDR video reconstruction with "
                                 "wavelet-masked pretraining")
    parser.add_argument("--version", action="version",
                        version=f"wavehdr (backend: {active_backend()})")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_config_flags(p, "synth")
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("mask", help="dual-domain masking of one scene")
    p.add_argument("--data", required=True, help="scene directory (with ldr/)")
    p.add_argument("--out", required=True)
    _add_config_flags(p, "mask")
    p.set_defaults(func=cmd_mask)

    p = subs.add_parser("pretrain", help="phase-1 masked pretraining")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True)
    _add_config_flags(p, "pretrain")
    p.set_defaults(func=cmd_pretrain)

    p = subs.add_parser("finetune", help="phase-2 LDR->HDR fine-tuning")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="phase-1 checkpoint for encoder warm start")
    p.add_argument("--val-data", help="held-out dataset for validation")
    _add_config_flags(p, "finetune")
    p.set_defaults(func=cmd_finetune)

    p = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, "eval")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--out", required=True)
    _add_config_flags(p, "gradcheck")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WaveHdrError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
