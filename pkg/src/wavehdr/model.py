"""The reconstruction network and its parameter/checkpoint handling.

Architecture (input clip x: [T, 3, H, W], output: [T, 3, H, W]):

* **Encoder** -- strided stem conv (3 -> C, /2 resolution) followed by
  ``num_resblocks`` residual blocks split into ``groups`` equal groups.
  The feature map after each group is kept: those D snapshots are the
  per-depth views the temporal fusion mixes.
* **Temporal mixture-of-experts** -- one 3-D conv expert per group runs
  over its group's features stacked along time; a softmax *across experts*
  at every (c, t, y, x) coordinate yields mixing weights, the weighted sum
  of the group features is the mixed map, and a residual 3-D conv
  finishes the fusion.
* **Scene memory** -- per scene id, a FIFO queue of the last ``memory_len``
  frames' reduced token maps.  Each frame's tokens attend over the
  concatenated queue (query from the current frame, keys/values projected
  from memory), a residual MLP refines the result, and the current frame's
  reduced tokens are pushed onto the queue afterwards (so a frame never
  attends to itself).  With an empty queue the attention term is skipped
  (bypass) but the push still happens.
* **Decoder** -- channel-expanding conv + sub-pixel upsample back to full
  resolution, two more convs, linear output (HDR values may exceed 1).

Phase-1 pretraining uses only encoder + decoder (per-frame
reconstruction); phase 2 runs the full stack.
"""

from __future__ import annotations

import json
import zlib
from collections import deque
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from wavehdr import tensor as T
from wavehdr import wtns
from wavehdr.errors import ConfigError, DimensionError, ParseError

MANIFEST_NAME = "manifest.txt"
MANIFEST_HEADER = "wavehdr-checkpoint 1"


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 8
    num_resblocks: int = 6
    groups: int = 3
    temporal_kernel: int = 3
    memory_len: int = 2
    use_tmoe: bool = True
    use_dmm: bool = True

    def __post_init__(self):
        if self.channels < 2 or self.channels % 2:
            raise ConfigError(f"channels must be even and >= 2, got {self.channels}")
        if self.num_resblocks < 1:
            raise ConfigError(f"num_resblocks must be >= 1, got {self.num_resblocks}")
        if self.groups < 1 or self.num_resblocks % self.groups:
            raise ConfigError(
                f"groups must divide num_resblocks, got {self.groups} / "
                f"{self.num_resblocks}")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ConfigError(
                f"temporal_kernel must be odd, got {self.temporal_kernel}")
        if self.memory_len < 1:
            raise ConfigError(f"memory_len must be >= 1, got {self.memory_len}")

    @property
    def reduced_channels(self) -> int:
        """Token width of the memory path (half the feature width)."""
        return self.channels // 2

    @property
    def blocks_per_group(self) -> int:
        return self.num_resblocks // self.groups


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor's name and shape, in a fixed sorted order."""
    c = cfg.channels
    cr = cfg.reduced_channels
    kt = cfg.temporal_kernel
    shapes: dict[str, tuple[int, ...]] = {
        "enc.stem.w": (c, 3, 3, 3),
        "enc.stem.b": (c,),
    }
    for i in range(cfg.num_resblocks):
        shapes[f"enc.res{i:02d}.conv1.w"] = (c, c, 3, 3)
        shapes[f"enc.res{i:02d}.conv1.b"] = (c,)
        shapes[f"enc.res{i:02d}.conv2.w"] = (c, c, 3, 3)
        shapes[f"enc.res{i:02d}.conv2.b"] = (c,)
    if cfg.use_tmoe:
        for d in range(cfg.groups):
            shapes[f"tmoe.expert{d}.w"] = (c, c, kt, 3, 3)
            shapes[f"tmoe.expert{d}.b"] = (c,)
        shapes["tmoe.fuse.w"] = (c, c, kt, 3, 3)
        shapes["tmoe.fuse.b"] = (c,)
    if cfg.use_dmm:
        shapes["dmm.reduce.w"] = (cr, c, 1, 1)
        shapes["dmm.reduce.b"] = (cr,)
        shapes["dmm.p_q"] = (cr, cr)
        shapes["dmm.p_k"] = (cr, cr)
        shapes["dmm.p_v"] = (cr, c)
        shapes["dmm.mlp.fc1.w"] = (c, c)
        shapes["dmm.mlp.fc1.b"] = (c,)
        shapes["dmm.mlp.fc2.w"] = (c, c)
        shapes["dmm.mlp.fc2.b"] = (c,)
    shapes["dec.expand.w"] = (4 * c, c, 3, 3)
    shapes["dec.expand.b"] = (4 * c,)
    shapes["dec.mid.w"] = (c, c, 3, 3)
    shapes["dec.mid.b"] = (c,)
    shapes["dec.out.w"] = (3, c, 3, 3)
    shapes["dec.out.b"] = (3,)
    return dict(sorted(shapes.items()))


# Output projections of the residual fusion/memory branches start at 1% of
# the usual He bound, so a freshly added stage is a near-identity map and
# cannot wreck a transferred trunk before it has learned anything useful.
_RESIDUAL_OUT = ("tmoe.fuse.w", "dmm.p_v", "dmm.mlp.fc2.w")
_RESIDUAL_OUT_SCALE = 0.01


def _init_array(name: str, shape: tuple[int, ...], seed: int) -> np.ndarray:
    """He-uniform weights, zero biases; the stream is keyed by (seed, name)
    so tensors shared between model variants initialize identically."""
    if name.endswith(".b"):
        return np.zeros(shape, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))
    if len(shape) >= 3:  # conv kernel [O, I, k...]
        fan_in = int(np.prod(shape[1:]))
    else:  # matrix applied as tokens @ P: fan-in is the first dim
        fan_in = shape[0]
    bound = np.sqrt(6.0 / fan_in)
    if name in _RESIDUAL_OUT:
        bound *= _RESIDUAL_OUT_SCALE
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """Named parameter tensors plus the config that shaped them."""

    def __init__(self, config: ModelConfig, tensors: dict[str, T.Tensor]):
        expected = parameter_shapes(config)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ConfigError(
                f"parameter names mismatch: missing {missing}, extra {extra}")
        for name, t in tensors.items():
            if t.shape != expected[name]:
                raise ConfigError(
                    f"{name}: shape {t.shape} != expected {expected[name]}")
        self.config = config
        self._tensors = {name: tensors[name] for name in sorted(tensors)}

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "ModelParams":
        tensors = {
            name: T.Tensor(_init_array(name, shape, seed), requires_grad=True)
            for name, shape in parameter_shapes(config).items()
        }
        return cls(config, tensors)

    def __getitem__(self, name: str) -> T.Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def param_count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def copy(self) -> "ModelParams":
        """Deep copy of the values (fresh tensors, no grads)."""
        return ModelParams(self.config, {
            name: T.Tensor(t.data.copy(), requires_grad=True)
            for name, t in self.items()
        })


def transfer_encoder(pretrained: ModelParams, target: ModelParams) -> ModelParams:
    """New params like ``target`` but with every ``enc.*`` tensor taken from
    ``pretrained`` -- the phase-1 -> phase-2 warm start."""
    src, dst = pretrained.config, target.config
    if (src.channels, src.num_resblocks, src.groups) != (
            dst.channels, dst.num_resblocks, dst.groups):
        raise ConfigError(
            f"encoder configs differ: {src} vs {dst}")
    tensors = {}
    for name, t in target.items():
        if name.startswith("enc."):
            tensors[name] = T.Tensor(pretrained[name].data.copy(), requires_grad=True)
        else:
            tensors[name] = T.Tensor(t.data.copy(), requires_grad=True)
    return ModelParams(target.config, tensors)


# ---------------------------------------------------------------- memory store


class MemoryStore:
    """Scene-keyed FIFO queues of detached token maps.

    Each entry is a numpy array [m, reduced_channels]; a queue holds at
    most ``max_len`` entries and evicts the oldest on overflow.
    """

    def __init__(self, max_len: int = 2):
        if max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {max_len}")
        self.max_len = max_len
        self._queues: dict[str, deque] = {}
        self.match_count = 0
        self.bypass_count = 0

    def lookup(self, scene_id: str) -> list[np.ndarray]:
        """Entries for a scene, oldest first.  Empty list for new scenes."""
        q = self._queues.get(scene_id)
        return list(q) if q else []

    def insert(self, scene_id: str, entry: np.ndarray) -> None:
        if scene_id not in self._queues:
            self._queues[scene_id] = deque(maxlen=self.max_len)
        self._queues[scene_id].append(np.asarray(entry))

    def queue_length(self, scene_id: str) -> int:
        return len(self._queues.get(scene_id, ()))

    def scene_ids(self) -> list[str]:
        return sorted(self._queues)

    def clear(self) -> None:
        self._queues.clear()

    def drop_scene(self, scene_id: str) -> None:
        self._queues.pop(scene_id, None)

    def clone(self) -> "MemoryStore":
        """Independent copy (used so evaluation can't disturb training state)."""
        out = MemoryStore(self.max_len)
        for scene_id, q in self._queues.items():
            for entry in q:
                out.insert(scene_id, entry.copy())
        out.match_count = self.match_count
        out.bypass_count = self.bypass_count
        return out


# ---------------------------------------------------------------- forward passes


def _resblock(x: T.Tensor, params: ModelParams, idx: int) -> T.Tensor:
    h = T.conv2d(x, params[f"enc.res{idx:02d}.conv1.w"],
                 params[f"enc.res{idx:02d}.conv1.b"], stride=1, pad=1)
    h = T.relu(h)
    h = T.conv2d(h, params[f"enc.res{idx:02d}.conv2.w"],
                 params[f"enc.res{idx:02d}.conv2.b"], stride=1, pad=1)
    return x + h


def encoder_forward(x: T.Tensor, params: ModelParams) -> list[T.Tensor]:
    """Group-wise feature snapshots of a clip.

    x: [T, 3, H, W] with even H, W.  Returns ``groups`` tensors, each
    [T, C, H/2, W/2]; the last is the deepest encoder output.
    """
    cfg = params.config
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError(f"encoder expects [T,3,H,W], got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"spatial dims must be even, got {x.shape}")
    h = T.relu(T.conv2d(x, params["enc.stem.w"], params["enc.stem.b"],
                        stride=2, pad=1))
    outs = []
    idx = 0
    for _ in range(cfg.groups):
        for _ in range(cfg.blocks_per_group):
            h = _resblock(h, params, idx)
            idx += 1
        outs.append(h)
    return outs


def _tmoe_vols_and_gates(group_feats: list[T.Tensor],
                         params: ModelParams) -> tuple[list[T.Tensor], T.Tensor]:
    """Time-major volumes [1,C,T,h,w] per group and the gate tensor
    [D,1,C,T,h,w] (softmax across the expert axis)."""
    cfg = params.config
    if len(group_feats) != cfg.groups:
        raise DimensionError(
            f"expected {cfg.groups} group features, got {len(group_feats)}")
    pad = (cfg.temporal_kernel // 2, 1, 1)
    vols = [T.transpose(g, (1, 0, 2, 3)) for g in group_feats]      # [C,T,h,w]
    vols = [T.reshape(v, (1,) + v.shape) for v in vols]             # [1,C,T,h,w]
    logits = [
        T.conv3d(v, params[f"tmoe.expert{d}.w"], params[f"tmoe.expert{d}.b"],
                 stride=1, pad=pad)
        for d, v in enumerate(vols)
    ]
    gates = T.softmax(T.stack(logits, axis=0), axis=0)              # [D,1,C,T,h,w]
    return vols, gates


def tmoe_forward(group_feats: list[T.Tensor], params: ModelParams) -> T.Tensor:
    """Fuse the per-group clip features across time.

    Each group's [T, C, h, w] map becomes a [1, C, T, h, w] volume; its
    expert produces gating logits, the softmax *across experts* at every
    coordinate weights the group features (not the logits), and a residual
    3-D conv refines the sum.  Returns [T, C, h, w].
    """
    cfg = params.config
    pad = (cfg.temporal_kernel // 2, 1, 1)
    vols, gates = _tmoe_vols_and_gates(group_feats, params)
    mixed = None
    for d, v in enumerate(vols):
        term = v * gates[d]
        mixed = term if mixed is None else mixed + term
    fused = mixed + T.conv3d(mixed, params["tmoe.fuse.w"], params["tmoe.fuse.b"],
                             stride=1, pad=pad)
    out = T.reshape(fused, fused.shape[1:])                         # [C,T,h,w]
    return T.transpose(out, (1, 0, 2, 3))


def tmoe_gates(group_feats: list[T.Tensor], params: ModelParams) -> np.ndarray:
    """The softmax mixing weights only, as numpy [D, 1, C, T, h, w]."""
    with T.no_grad():
        _, gates = _tmoe_vols_and_gates(group_feats, params)
    return gates.data


def _to_tokens(feat: T.Tensor) -> T.Tensor:
    """[1, C, h, w] -> [h*w, C] token matrix."""
    c = feat.shape[1]
    m = feat.shape[2] * feat.shape[3]
    return T.transpose(T.reshape(feat, (c, m)), (1, 0))


def _from_tokens(tokens: T.Tensor, h: int, w: int) -> T.Tensor:
    """[h*w, C] -> [1, C, h, w]."""
    c = tokens.shape[1]
    return T.reshape(T.transpose(tokens, (1, 0)), (1, c, h, w))


def dmm_forward(feats: T.Tensor, scene_id: str, store: MemoryStore,
                params: ModelParams) -> T.Tensor:
    """Memory-augmented refinement of clip features, frame by frame.

    feats: [T, C, h, w].  For each frame in order: reduce to tokens, attend
    over the scene's queued token maps (skipped when the queue is empty),
    apply the residual MLP, and push the frame's reduced tokens onto the
    queue.  Mutates ``store``; returns [T, C, h, w].
    """
    cfg = params.config
    if feats.ndim != 4 or feats.shape[1] != cfg.channels:
        raise DimensionError(f"dmm expects [T,{cfg.channels},h,w], got {feats.shape}")
    nt, _, h, w = feats.shape
    out_frames = []
    for t in range(nt):
        frame = T.reshape(feats[t], (1,) + feats.shape[1:])          # [1,C,h,w]
        reduced = T.conv2d(frame, params["dmm.reduce.w"],
                           params["dmm.reduce.b"])                    # [1,Cr,h,w]
        x_tok = _to_tokens(reduced)                                   # [m,Cr]
        f_tok = _to_tokens(frame)                                     # [m,C]

        entries = store.lookup(scene_id)
        if entries:
            mem = T.Tensor(np.concatenate(entries, axis=0))           # [n*m,Cr]
            q = T.matmul(x_tok, params["dmm.p_q"])                    # [m,Cr]
            k = T.matmul(mem, params["dmm.p_k"])                      # [n*m,Cr]
            v = T.matmul(mem, params["dmm.p_v"])                      # [n*m,C]
            attn = T.softmax(T.matmul(q, T.transpose(k)), axis=-1)    # [m,n*m]
            hidden = T.matmul(attn, v) + f_tok
            store.match_count += 1
        else:
            hidden = f_tok
            store.bypass_count += 1

        z = T.relu(T.matmul(hidden, params["dmm.mlp.fc1.w"]) + params["dmm.mlp.fc1.b"])
        z = T.matmul(z, params["dmm.mlp.fc2.w"]) + params["dmm.mlp.fc2.b"]
        refined = z + hidden                                          # [m,C]
        out_frames.append(_from_tokens(refined, h, w))

        store.insert(scene_id, x_tok.data.copy())
    return T.concat(out_frames, axis=0)


def decoder_forward(feats: T.Tensor, params: ModelParams) -> T.Tensor:
    """[T, C, h, w] -> [T, 3, 2h, 2w] via sub-pixel upsampling."""
    y = T.conv2d(feats, params["dec.expand.w"], params["dec.expand.b"],
                 stride=1, pad=1)
    y = T.relu(T.pixel_shuffle(y, 2))
    y = T.relu(T.conv2d(y, params["dec.mid.w"], params["dec.mid.b"],
                        stride=1, pad=1))
    return T.conv2d(y, params["dec.out.w"], params["dec.out.b"], stride=1, pad=1)


def phase1_forward(x, params: ModelParams) -> T.Tensor:
    """Pretraining path: encoder + decoder only (frames as a batch)."""
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    feats = encoder_forward(x, params)
    return decoder_forward(feats[-1], params)


def phase2_forward(x, scene_id: str, store: MemoryStore,
                   params: ModelParams) -> T.Tensor:
    """Full path: encoder -> temporal fusion -> memory -> decoder.

    Temporal fusion and memory are skipped when the config disables them,
    which is how the ablation variants run.
    """
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    cfg = params.config
    feats = encoder_forward(x, params)
    fused = tmoe_forward(feats, params) if cfg.use_tmoe else feats[-1]
    refined = dmm_forward(fused, scene_id, store, params) if cfg.use_dmm else fused
    return decoder_forward(refined, params)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path: str | Path, params: ModelParams) -> Path:
    """Write one WTNS file per tensor plus a text manifest into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER, "config " + json.dumps(asdict(params.config),
                                                     sort_keys=True)]
    for name, t in params.items():
        wtns.save_tensor(out / f"{name}.wtns", t.data)
        dims = ",".join(str(d) for d in t.shape)
        lines.append(f"tensor {name} {dims}")
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return out


def load_checkpoint(path: str | Path) -> ModelParams:
    """Inverse of :func:`save_checkpoint`, with full validation."""
    base = Path(path)
    manifest = base / MANIFEST_NAME
    if not manifest.is_file():
        raise ConfigError(f"{base}: no {MANIFEST_NAME}")
    lines = manifest.read_text().splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ParseError(f"{manifest}: bad header line")
    if len(lines) < 2 or not lines[1].startswith("config "):
        raise ParseError(f"{manifest}: missing config line")
    try:
        raw = json.loads(lines[1][len("config "):])
    except json.JSONDecodeError as e:
        raise ParseError(f"{manifest}: config is not valid JSON: {e}") from None
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{manifest}: unknown config keys {sorted(unknown)}")
    config = ModelConfig(**raw)

    tensors: dict[str, T.Tensor] = {}
    for ln, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "tensor":
            raise ParseError(f"{manifest}:{ln}: bad tensor line {line!r}")
        name, dims_s = parts[1], parts[2]
        shape = tuple(int(d) for d in dims_s.split(",")) if dims_s else ()
        arr = wtns.load_tensor(base / f"{name}.wtns")
        if arr.shape != shape:
            raise ParseError(
                f"{manifest}:{ln}: {name} shape {arr.shape} != manifest {shape}")
        tensors[name] = T.Tensor(np.asarray(arr, dtype=np.float64),
                                 requires_grad=True)
    return ModelParams(config, tensors)
