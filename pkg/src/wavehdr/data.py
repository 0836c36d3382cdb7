"""Synthetic LDR/HDR video scenes and the on-disk dataset layout.

A scene is a short clip with temporally coherent content: a smooth static
background plus moving Gaussian highlights whose peaks exceed the LDR
range.  The LDR stream is derived from the HDR stream by clipping to
[0, 1], gamma encoding, and 8-bit quantization -- so reconstruction has to
both invert the tone curve and hallucinate clipped highlights, and
temporal/memory context genuinely helps (a region clipped in one frame may
be unclipped in another once a highlight moves off it).

On disk a dataset is::

    root/
      <scene_id>/
        ldr/0000.pfm, 0001.pfm, ...
        hdr/0000.pfm, 0001.pfm, ...

with frame indices aligned between the two streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wavehdr import pfm
from wavehdr.errors import ConfigError

GAMMA = 2.2
LDR_LEVELS = 255


@dataclass(frozen=True)
class SynthConfig:
    num_scenes: int = 4
    frames_per_scene: int = 8
    height: int = 32
    width: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.num_scenes < 1 or self.frames_per_scene < 1:
            raise ConfigError("num_scenes and frames_per_scene must be >= 1")
        if self.height < 8 or self.width < 8:
            raise ConfigError(f"frames must be at least 8x8, got "
                              f"{self.height}x{self.width}")


@dataclass
class Scene:
    """One video scene; frames are [T, H, W, 3] float32 arrays."""

    scene_id: str
    ldr: np.ndarray
    hdr: np.ndarray

    def __post_init__(self):
        if self.ldr.shape != self.hdr.shape:
            raise ConfigError(
                f"{self.scene_id}: ldr {self.ldr.shape} != hdr {self.hdr.shape}")
        if self.ldr.ndim != 4 or self.ldr.shape[3] != 3:
            raise ConfigError(
                f"{self.scene_id}: expected [T,H,W,3], got {self.ldr.shape}")

    @property
    def num_frames(self) -> int:
        return int(self.ldr.shape[0])

    @property
    def frame_shape(self) -> tuple[int, int]:
        return int(self.ldr.shape[1]), int(self.ldr.shape[2])


def tone_map_ldr(hdr: np.ndarray) -> np.ndarray:
    """Camera-style degradation: clip, gamma-encode, quantize to 8 bits."""
    clipped = np.clip(hdr, 0.0, 1.0)
    encoded = clipped ** (1.0 / GAMMA)
    return (np.round(encoded * LDR_LEVELS) / LDR_LEVELS).astype(np.float32)


def _wrapped_dist2(yy, xx, cy, cx, h, w):
    """Squared distance on a torus, so moving blobs never teleport."""
    dy = np.abs(yy - cy)
    dy = np.minimum(dy, h - dy)
    dx = np.abs(xx - cx)
    dx = np.minimum(dx, w - dx)
    return dy * dy + dx * dx


def generate_scene(scene_id: str, num_frames: int, height: int, width: int,
                   seed: int) -> Scene:
    """Deterministic synthetic scene for the given seed."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")

    base = np.full((height, width, 3), 0.35)
    for c in range(3):
        for _ in range(3):
            fy, fx = rng.uniform(0.5, 2.5, size=2)
            py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
            amp = rng.uniform(0.05, 0.18)
            base[:, :, c] += amp * (np.sin(2 * np.pi * fy * yy / height + py)
                                    * np.sin(2 * np.pi * fx * xx / width + px))
    base = np.clip(base, 0.02, None)

    n_blobs = int(rng.integers(2, 5))
    centers = rng.uniform([0, 0], [height, width], size=(n_blobs, 2))
    vel = rng.uniform(-2.0, 2.0, size=(n_blobs, 2))
    sigma = rng.uniform(0.06, 0.16) * min(height, width) * np.ones(n_blobs)
    sigma *= rng.uniform(0.7, 1.3, size=n_blobs)
    peaks = rng.uniform(1.5, 4.0, size=(n_blobs, 3))

    hdr = np.empty((num_frames, height, width, 3), dtype=np.float32)
    for t in range(num_frames):
        frame = base.copy()
        for i in range(n_blobs):
            cy = (centers[i, 0] + vel[i, 0] * t) % height
            cx = (centers[i, 1] + vel[i, 1] * t) % width
            d2 = _wrapped_dist2(yy, xx, cy, cx, height, width)
            bump = np.exp(-d2 / (2.0 * sigma[i] ** 2))
            frame = frame + bump[:, :, None] * peaks[i]
        hdr[t] = frame.astype(np.float32)

    return Scene(scene_id, tone_map_ldr(hdr), hdr)


def generate_dataset(cfg: SynthConfig) -> list[Scene]:
    """One scene per index, each with its own derived seed."""
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(cfg.num_scenes)
    scenes = []
    for i, child in enumerate(children):
        seed = int(child.generate_state(1)[0])
        scenes.append(generate_scene(f"scene{i:03d}", cfg.frames_per_scene,
                                     cfg.height, cfg.width, seed))
    return scenes


# ---------------------------------------------------------------- disk layout


def write_scene_dir(root: str | Path, scene: Scene) -> Path:
    base = Path(root) / scene.scene_id
    for stream, frames in (("ldr", scene.ldr), ("hdr", scene.hdr)):
        d = base / stream
        d.mkdir(parents=True, exist_ok=True)
        for t in range(frames.shape[0]):
            pfm.save_pfm(d / f"{t:04d}.pfm", frames[t])
    return base


def load_scene_dir(path: str | Path) -> Scene:
    base = Path(path)
    streams = {}
    for stream in ("ldr", "hdr"):
        d = base / stream
        if not d.is_dir():
            raise ConfigError(f"{base}: missing {stream}/ directory")
        files = sorted(d.glob("*.pfm"))
        if not files:
            raise ConfigError(f"{d}: no .pfm frames")
        frames = [pfm.load_pfm(f) for f in files]
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise ConfigError(f"{d}: inconsistent frame shapes {sorted(shapes)}")
        if frames[0].ndim != 3:
            raise ConfigError(f"{d}: expected colour frames, got {frames[0].shape}")
        streams[stream] = np.stack(frames).astype(np.float32)
    if streams["ldr"].shape != streams["hdr"].shape:
        raise ConfigError(
            f"{base}: ldr {streams['ldr'].shape} != hdr {streams['hdr'].shape}")
    return Scene(base.name, streams["ldr"], streams["hdr"])


def load_dataset_dir(root: str | Path) -> list[Scene]:
    rootp = Path(root)
    if not rootp.is_dir():
        raise ConfigError(f"dataset directory {root} does not exist")
    scene_dirs = sorted(p for p in rootp.iterdir() if p.is_dir())
    if not scene_dirs:
        raise ConfigError(f"dataset directory {root} has no scene subdirectories")
    return [load_scene_dir(p) for p in scene_dirs]


def write_dataset_dir(root: str | Path, scenes: list[Scene]) -> None:
    for scene in scenes:
        write_scene_dir(root, scene)


# ---------------------------------------------------------------- layout helpers


def hwc_to_chw(frames: np.ndarray) -> np.ndarray:
    """[T, H, W, 3] -> [T, 3, H, W] (the model's layout)."""
    return np.ascontiguousarray(frames.transpose(0, 3, 1, 2))


def chw_to_hwc(frames: np.ndarray) -> np.ndarray:
    """[T, 3, H, W] -> [T, H, W, 3] (the file layout)."""
    return np.ascontiguousarray(frames.transpose(0, 2, 3, 1))
