"""Optimization and the two-phase training procedure.

Phase 1 (pretraining): sample a clip patch, mask every frame in the
wavelet domain with a curriculum-ramped ratio, and train encoder+decoder
to reconstruct the unmasked patch under L1.

Phase 2 (fine-tuning): start from the phase-1 encoder (or from scratch),
walk scenes sequentially so the scene memory fills with each scene's own
recent frames, and train the full model LDR -> HDR under L1 + SSIM.
Memory carries across clips of the same scene within an epoch and is
cleared between epochs; validation runs on cloned state so it can't
disturb training.

Everything is seeded: sampling streams derive from (seed, purpose, step)
tuples, so runs are bit-for-bit reproducible -- log files and checkpoints
included (logs carry no timestamps and print floats with %.17g).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wavehdr import losses as L
from wavehdr import metrics
from wavehdr import model as M
from wavehdr import tensor as T
from wavehdr.data import Scene, hwc_to_chw
from wavehdr.errors import ConfigError, DimensionError, NumericalError
from wavehdr.wavelet import (CurriculumSchedule, FilterBank, MaskConfig,
                             apply_wmim, curriculum_ratio)

_PHASE1_STREAM = 101
_PHASE2_STREAM = 202


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 200
    base_lr: float = 2e-4
    lr_halving_period: int = 0  # 0 -> total_steps // 5, at least 1
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    frames_per_clip: int = 2
    patch_size: int = 16
    patch_stride: int = 16
    val_interval: int = 0  # 0 -> total_steps // 10, at least 1
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.frames_per_clip < 1:
            raise ConfigError(f"frames_per_clip must be >= 1")
        if self.patch_size < 2 or self.patch_size % 2:
            raise ConfigError(
                f"patch_size must be even and >= 2, got {self.patch_size}")
        if self.patch_stride < 1:
            raise ConfigError(f"patch_stride must be >= 1")
        if self.lr_halving_period < 0 or self.val_interval < 0:
            raise ConfigError("lr_halving_period/val_interval must be >= 0")

    @property
    def halving_period(self) -> int:
        return self.lr_halving_period or max(1, self.total_steps // 5)

    @property
    def val_every(self) -> int:
        return self.val_interval or max(1, self.total_steps // 10)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Step-decayed rate: halves every ``halving_period`` steps (0-based)."""
    return cfg.base_lr * 0.5 ** (step // cfg.halving_period)


# ---------------------------------------------------------------- Adam


class AdamState:
    """First/second moment accumulators for one parameter set."""

    def __init__(self, params: M.ModelParams, cfg: TrainConfig):
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}


def adam_step(params: M.ModelParams, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update from the grads stored on ``params``.

    Parameters without a gradient this step are left untouched (their
    moments do not advance either).  Non-finite gradients abort.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient in {name} at optimizer step {t}")
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------- patches


def patch_windows(height: int, width: int, size: int, stride: int
                  ) -> list[tuple[int, int]]:
    """Top-left corners of all stride-spaced size x size windows, row-major."""
    if size > height or size > width:
        raise DimensionError(
            f"patch {size} larger than frame {(height, width)}")
    return [(y, x)
            for y in range(0, height - size + 1, stride)
            for x in range(0, width - size + 1, stride)]


def crop_patches(frames: np.ndarray, patch_size: int, stride: int,
                 seed: int) -> list[np.ndarray]:
    """Every aligned spatial window of a [T, H, W, 3] clip, in seeded order.

    The same window is cut from all frames, preserving temporal alignment.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise DimensionError(f"expected [T,H,W,3], got {frames.shape}")
    windows = patch_windows(frames.shape[1], frames.shape[2], patch_size, stride)
    order = np.random.default_rng(seed).permutation(len(windows))
    return [frames[:, y:y + patch_size, x:x + patch_size, :]
            for y, x in (windows[i] for i in order)]


# ---------------------------------------------------------------- logging


def format_row(values) -> str:
    """TSV row; floats at full round-trip precision, no timestamps."""
    parts = []
    for v in values:
        if isinstance(v, (float, np.floating)):
            parts.append("%.17g" % v)
        else:
            parts.append(str(v))
    return "\t".join(parts)


def write_tsv(path: str | Path, header: list[str], rows: list) -> None:
    lines = ["\t".join(header)]
    lines.extend(format_row(r) for r in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _check_finite_loss(loss: T.Tensor, step: int, context: str) -> float:
    val = loss.item()
    if not np.isfinite(val):
        raise NumericalError(f"{context}: loss became {val} at step {step}")
    return val


# ---------------------------------------------------------------- phase 1


def train_phase1(scenes: list[Scene], model_cfg: M.ModelConfig,
                 train_cfg: TrainConfig, mask_cfg: MaskConfig,
                 sched: CurriculumSchedule, fb: FilterBank,
                 out_dir: str | Path | None = None
                 ) -> tuple[M.ModelParams, list[tuple]]:
    """Masked-reconstruction pretraining of encoder + decoder.

    Returns the trained parameters (an encoder/decoder-only variant of
    ``model_cfg``) and the per-step log rows (step, lr, mask_ratio, loss).
    """
    if not scenes:
        raise ConfigError("no scenes to train on")
    factor = 2 ** mask_cfg.depth
    if train_cfg.patch_size % factor:
        raise ConfigError(
            f"patch_size {train_cfg.patch_size} not divisible by 2^depth={factor}")
    for s in scenes:
        if s.num_frames < train_cfg.frames_per_clip:
            raise ConfigError(
                f"{s.scene_id} has {s.num_frames} frames < clip length "
                f"{train_cfg.frames_per_clip}")

    pre_cfg = dataclasses.replace(model_cfg, use_tmoe=False, use_dmm=False)
    params = M.ModelParams.initialize(pre_cfg, seed=train_cfg.seed)
    opt = AdamState(params, train_cfg)
    nclip = train_cfg.frames_per_clip
    rows: list[tuple] = []

    for step in range(train_cfg.total_steps):
        rng = np.random.default_rng(
            np.random.SeedSequence([train_cfg.seed, _PHASE1_STREAM, step]))
        scene = scenes[int(rng.integers(len(scenes)))]
        h, w = scene.frame_shape
        t0 = int(rng.integers(scene.num_frames - nclip + 1))
        windows = patch_windows(h, w, train_cfg.patch_size, train_cfg.patch_stride)
        y0, x0 = windows[int(rng.integers(len(windows)))]
        clip = scene.ldr[t0:t0 + nclip,
                         y0:y0 + train_cfg.patch_size,
                         x0:x0 + train_cfg.patch_size, :].astype(np.float64)

        ratio = curriculum_ratio(step, sched)
        masked = np.empty_like(clip)
        for i in range(nclip):
            frame_cfg = dataclasses.replace(
                mask_cfg, low_freq_ratio=ratio,
                seed=int(rng.integers(np.iinfo(np.int64).max)))
            masked[i] = apply_wmim(clip[i], frame_cfg, fb).frame

        params.zero_grad()
        pred = M.phase1_forward(hwc_to_chw(masked), params)
        loss = L.l1_loss(pred, hwc_to_chw(clip))
        val = _check_finite_loss(loss, step, "phase1")
        loss.backward()
        lr = lr_at(step, train_cfg)
        adam_step(params, opt, lr)
        rows.append((step, lr, ratio, val))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_tsv(out / "phase1_log.tsv",
                  ["step", "lr", "mask_ratio", "loss"], rows)
        M.save_checkpoint(out / "checkpoint", params)
    return params, rows


# ---------------------------------------------------------------- evaluation


def evaluate_scenes(params: M.ModelParams, scenes: list[Scene],
                    frames_per_clip: int = 2) -> dict:
    """Full-frame reconstruction quality over whole scenes.

    Each scene runs through the phase-2 path with a fresh memory store, in
    consecutive clips, so memory behaviour matches deployment.  Returns
    mean PSNR plus per-scene values.
    """
    if not scenes:
        raise ConfigError("no scenes to evaluate")
    per_scene: dict[str, float] = {}
    all_psnr: list[float] = []
    with T.no_grad():
        for scene in scenes:
            store = M.MemoryStore(params.config.memory_len)
            preds = []
            nt = scene.num_frames
            t0 = 0
            while t0 < nt:
                t1 = min(t0 + frames_per_clip, nt)
                x = hwc_to_chw(scene.ldr[t0:t1].astype(np.float64))
                pred = M.phase2_forward(x, scene.scene_id, store, params)
                preds.append(pred.data)
                t0 = t1
            pred_clip = np.concatenate(preds, axis=0)
            gt = hwc_to_chw(scene.hdr[:nt].astype(np.float64))
            vals = [metrics.psnr(pred_clip[i], gt[i],
                                 peak=float(gt.max(initial=1.0)))
                    for i in range(nt)]
            per_scene[scene.scene_id] = float(np.mean(vals))
            all_psnr.extend(vals)
    return {"psnr": float(np.mean(all_psnr)), "per_scene": per_scene}


# ---------------------------------------------------------------- phase 2


def train_phase2(scenes: list[Scene], model_cfg: M.ModelConfig,
                 train_cfg: TrainConfig, loss_cfg: L.LossConfig,
                 pretrained: M.ModelParams | None = None,
                 val_scenes: list[Scene] | None = None,
                 out_dir: str | Path | None = None
                 ) -> tuple[M.ModelParams, M.MemoryStore, dict]:
    """Scene-sequential fine-tuning of the full model.

    Returns (params, store, history) where history holds the step rows
    (step, lr, scene, loss) and any validation rows (step, val_psnr).
    The best-validation checkpoint, final checkpoint, and logs land in
    ``out_dir`` when given.
    """
    if not scenes:
        raise ConfigError("no scenes to train on")
    nclip = train_cfg.frames_per_clip
    for s in scenes:
        if s.num_frames < nclip:
            raise ConfigError(f"{s.scene_id}: fewer frames than clip length")

    params = M.ModelParams.initialize(model_cfg, seed=train_cfg.seed)
    if pretrained is not None:
        params = M.transfer_encoder(pretrained, params)
    opt = AdamState(params, train_cfg)
    store = M.MemoryStore(model_cfg.memory_len)

    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    rows: list[tuple] = []
    val_rows: list[tuple] = []
    best_psnr = -np.inf
    step = 0
    epoch = 0
    while step < train_cfg.total_steps:
        erng = np.random.default_rng(
            np.random.SeedSequence([train_cfg.seed, _PHASE2_STREAM, epoch]))
        order = erng.permutation(len(scenes))
        store.clear()  # memories do not survive across epochs
        for si in order:
            scene = scenes[int(si)]
            h, w = scene.frame_shape
            size = min(train_cfg.patch_size, h, w)
            size -= size % 2
            windows = patch_windows(h, w, size, train_cfg.patch_stride)
            y0, x0 = windows[int(erng.integers(len(windows)))]
            for t0 in range(0, scene.num_frames - nclip + 1, nclip):
                if step >= train_cfg.total_steps:
                    break
                ldr = scene.ldr[t0:t0 + nclip, y0:y0 + size, x0:x0 + size, :]
                hdr = scene.hdr[t0:t0 + nclip, y0:y0 + size, x0:x0 + size, :]
                params.zero_grad()
                pred = M.phase2_forward(hwc_to_chw(ldr.astype(np.float64)),
                                        scene.scene_id, store, params)
                loss = L.total_loss(pred, hwc_to_chw(hdr.astype(np.float64)),
                                    loss_cfg)
                val = _check_finite_loss(loss, step, "phase2")
                loss.backward()
                lr = lr_at(step, train_cfg)
                adam_step(params, opt, lr)
                rows.append((step, lr, scene.scene_id, val))
                step += 1

                if val_scenes and step % train_cfg.val_every == 0:
                    result = evaluate_scenes(params.copy(), val_scenes, nclip)
                    val_rows.append((step, result["psnr"]))
                    if result["psnr"] > best_psnr:
                        best_psnr = result["psnr"]
                        if out is not None:
                            M.save_checkpoint(out / "best", params)
        epoch += 1

    if out is not None:
        write_tsv(out / "phase2_log.tsv", ["step", "lr", "scene", "loss"], rows)
        if val_rows:
            write_tsv(out / "val_log.tsv", ["step", "val_psnr"], val_rows)
        M.save_checkpoint(out / "final", params)

    history = {"rows": rows, "val_rows": val_rows, "best_psnr": best_psnr,
               "epochs": epoch}
    return params, store, history
