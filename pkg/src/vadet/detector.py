"""Fully convolutional per-sample axle classifier.

The network is a U-shaped encoder/decoder over (time, scale) scalogram
tensors.  Four pooling steps halve both axes on the way down; the decoder
restores only the time axis, so the scale axis stays collapsed at 1 and the
head emits one probability per input sample.  Building blocks: a convolution
block (CB) is batch normalization, convolution, ReLU; a residual block runs
three CBs (1x1, 3x3, 1x1 kernels) against a 1x1 CB skip and sums.  The loss
is focal loss over the per-sample probabilities.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, InvalidInputError
from .scalogram import Scalogram
from .util import atomic_write_bytes

PROB_EPS = 1e-7
CHECKPOINT_MAGIC = b"VAXD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 4
    base_feature_maps: int = 16
    input_channels: int = 6
    input_scales: int = 16
    kernel_time: int = 3
    kernel_freq: int = 3

    def __post_init__(self):
        if self.input_scales != 2**self.depth:
            raise ConfigError(
                f"input_scales must equal 2^depth ({2**self.depth}), got {self.input_scales}"
            )
        if self.base_feature_maps < 1:
            raise ConfigError("base_feature_maps must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")


def pad_to_multiple_of_16(tensor: np.ndarray, multiple: int = 16) -> tuple[np.ndarray, int]:
    """Zero-pad the time axis up to the next multiple; returns original length."""
    tensor = np.asarray(tensor)
    n_s = tensor.shape[0]
    if n_s < 1:
        raise InvalidInputError("tensor must have at least one time sample")
    target = ((n_s + multiple - 1) // multiple) * multiple
    if target == n_s:
        return tensor, n_s
    pad = np.zeros((target - n_s,) + tensor.shape[1:], dtype=tensor.dtype)
    return np.concatenate([tensor, pad], axis=0), n_s


class ConvBlock(nn.Module):
    """Batch normalization, then convolution, then ReLU."""

    def __init__(self, in_ch: int, out_ch: int, kernel: tuple[int, int]):
        super().__init__()
        pad = (kernel[0] // 2, kernel[1] // 2)
        self.bn = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, padding=pad)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(self.conv(self.bn(x)))


class ResidualBlock(nn.Module):
    """Three-CB filter path (1x1, kxk, 1x1) summed with a 1x1 CB skip."""

    def __init__(self, channels: int, kernel: tuple[int, int]):
        super().__init__()
        self.filter_path = nn.Sequential(
            ConvBlock(channels, channels, (1, 1)),
            ConvBlock(channels, channels, kernel),
            ConvBlock(channels, channels, (1, 1)),
        )
        self.skip_path = ConvBlock(channels, channels, (1, 1))

    def forward(self, x):
        return self.filter_path(x) + self.skip_path(x)


class SkipAdapter(nn.Module):
    """Collapse the scale axis of an encoder tensor into channels, then 1x1 conv.

    (B, C, T, F) becomes (B, C*F, T, 1) before the channel-count adaptation,
    so the skip matches the decoder tensors whose scale axis is already 1.
    """

    def __init__(self, in_ch: int, in_freq: int, out_ch: int):
        super().__init__()
        self.in_freq = in_freq
        self.conv = nn.Conv2d(in_ch * in_freq, out_ch, (1, 1))

    def forward(self, x):
        b, c, t, f = x.shape
        flat = x.permute(0, 1, 3, 2).reshape(b, c * f, t, 1)
        return self.conv(flat)


class AxleDetectorNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        kernel = (config.kernel_time, config.kernel_freq)
        depth = config.depth

        enc_channels = [config.base_feature_maps * 2**i for i in range(depth)]
        bottleneck_ch = config.base_feature_maps * 2**depth

        self.encoders = nn.ModuleList()
        in_ch = config.input_channels
        for ch in enc_channels:
            self.encoders.append(
                nn.ModuleDict(
                    {
                        "cb": ConvBlock(in_ch, ch, kernel),
                        "res": ResidualBlock(ch, kernel),
                        "pool": nn.MaxPool2d(2),
                    }
                )
            )
            in_ch = ch

        self.bottleneck = nn.Sequential(
            ConvBlock(in_ch, bottleneck_ch, kernel),
            ResidualBlock(bottleneck_ch, kernel),
        )

        self.decoders = nn.ModuleList()
        in_ch = bottleneck_ch
        for j in range(depth):
            out_ch = bottleneck_ch // 2 ** (j + 1)
            skip_level = depth - 1 - j
            skip_freq = config.input_scales // 2**skip_level
            self.decoders.append(
                nn.ModuleDict(
                    {
                        "up": nn.ConvTranspose2d(
                            in_ch,
                            out_ch,
                            kernel_size=(3, 1),
                            stride=(2, 1),
                            padding=(1, 0),
                            output_padding=(1, 0),
                        ),
                        "adapt": SkipAdapter(enc_channels[skip_level], skip_freq, out_ch),
                        "cb": ConvBlock(2 * out_ch, out_ch, kernel),
                        "res": ResidualBlock(out_ch, kernel),
                    }
                )
            )
            in_ch = out_ch

        self.head = nn.Conv2d(in_ch, 1, kernel, padding=(kernel[0] // 2, kernel[1] // 2))
        self.last_bottleneck_shape: tuple[int, int] | None = None

    def forward(self, x):
        # x: (B, channels, T, scales) with T a multiple of 2^depth.
        skips = []
        for level in self.encoders:
            x = level["res"](level["cb"](x))
            skips.append(x)
            x = level["pool"](x)
        x = self.bottleneck(x)
        self.last_bottleneck_shape = (int(x.shape[2]), int(x.shape[3]))
        for j, level in enumerate(self.decoders):
            x = level["up"](x)
            skip = level["adapt"](skips[len(skips) - 1 - j])
            x = torch.cat([x, skip], dim=1)
            x = level["res"](level["cb"](x))
        x = torch.sigmoid(self.head(x))
        return x[:, 0, :, 0]


@dataclass
class DetectorModel:
    """A built network plus the configuration and provenance it was trained with."""

    config: ModelConfig
    net: AxleDetectorNet
    training_manifest: dict = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())


def build_model(config: ModelConfig, seed: int | None = None) -> DetectorModel:
    if seed is not None:
        torch.manual_seed(seed)
    return DetectorModel(config=config, net=AxleDetectorNet(config))


def focal_loss(p, y, gamma: float, mask=None):
    """Mean focal loss; natural log, probabilities clamped to [eps, 1-eps].

    Accepts torch tensors (differentiable) or array-likes (returns float).
    With a mask, the mean runs over mask-true samples only.
    """
    if gamma < 0:
        raise InvalidInputError("gamma must be >= 0")
    as_torch = isinstance(p, torch.Tensor)
    p_t_in = p if as_torch else torch.as_tensor(np.asarray(p, dtype=np.float64))
    y_t = y if isinstance(y, torch.Tensor) else torch.as_tensor(np.asarray(y, dtype=np.float64))
    if p_t_in.shape != y_t.shape:
        raise InvalidInputError(f"shape mismatch: p {tuple(p_t_in.shape)} vs y {tuple(y_t.shape)}")
    y_t = y_t.to(p_t_in.dtype)
    p_c = torch.clamp(p_t_in, PROB_EPS, 1.0 - PROB_EPS)
    p_t = p_c * y_t + (1.0 - p_c) * (1.0 - y_t)
    loss = -((1.0 - p_t) ** gamma) * torch.log(p_t)
    if mask is not None:
        m = mask if isinstance(mask, torch.Tensor) else torch.as_tensor(np.asarray(mask))
        if m.shape != loss.shape:
            raise InvalidInputError("mask shape must match p")
        m = m.to(loss.dtype)
        total = m.sum()
        if total.item() == 0:
            raise InvalidInputError("mask selects no samples")
        out = (loss * m).sum() / total
    else:
        out = loss.mean()
    return out if as_torch else float(out.item())


def scalogram_to_input(tensor: np.ndarray) -> torch.Tensor:
    """(n_s, n_f, n_t) array to a (1, n_t, n_s, n_f) float32 torch tensor."""
    arr = np.transpose(np.asarray(tensor, dtype=np.float32), (2, 0, 1))
    return torch.from_numpy(np.ascontiguousarray(arr)).unsqueeze(0)


def predict(model: DetectorModel, sg: Scalogram) -> np.ndarray:
    """Pad, forward, crop: one probability per scalogram time sample."""
    cfg = model.config
    tensor = sg.tensor
    if tensor.ndim != 3 or tensor.shape[1] != cfg.input_scales or tensor.shape[2] != cfg.input_channels:
        raise InvalidInputError(
            f"scalogram shape {tensor.shape} does not match model "
            f"(n_s, {cfg.input_scales}, {cfg.input_channels})"
        )
    padded, n_s = pad_to_multiple_of_16(tensor, 2**cfg.depth)
    model.net.eval()
    with torch.no_grad():
        out = model.net(scalogram_to_input(padded))
    return out[0, :n_s].numpy().astype(np.float64)


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, JSON header (config + training manifest),
# then per state-dict entry: name, shape, raw little-endian float32 data, in
# state-dict (topological) order.  Integer entries are cast to float32 and
# restored to their original dtype on load.


def save_checkpoint(model: DetectorModel, path: Path) -> None:
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "training_manifest": model.training_manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
    buf.write(header_bytes)
    state = model.net.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        name_b = name.encode("utf-8")
        arr = tensor.detach().cpu().numpy().astype("<f4")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}i", *arr.shape) if arr.ndim else b"")
        buf.write(np.ascontiguousarray(arr).tobytes())
    atomic_write_bytes(Path(path), buf.getvalue())


def load_checkpoint(path: Path) -> DetectorModel:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    header = json.loads(data[off : off + header_len].decode("utf-8"))
    off += header_len
    config = ModelConfig(**header["config"])
    model = DetectorModel(
        config=config,
        net=AxleDetectorNet(config),
        training_manifest=header.get("training_manifest", {}),
    )
    (n_entries,) = struct.unpack_from("<I", data, off)
    off += 4
    state = model.net.state_dict()
    loaded = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}i", data, off) if ndim else ()
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        if name not in state:
            raise InvalidInputError(f"{path}: unexpected parameter {name!r}")
        target = state[name]
        loaded[name] = torch.from_numpy(arr.copy()).to(target.dtype).reshape(target.shape)
    model.net.load_state_dict(loaded)
    return model
