"""The dual-branch real-centered detector network.

Spatial branch: a scaled-down Xception-style stack (entry flow with two
conv/bn/relu units and a pooling stage, residual middle-flow blocks built
from depthwise-separable convolutions, exit flow with a separable conv and
global average pooling).  Frequency branch: three conv/bn/relu/pool stages
over the standardized log-spectrum.  Their pooled features are concatenated
(spatial first, then frequency), projected through a two-layer MLP to the
embedding width, and normalized onto the unit hypersphere.  The classifier
and the learnable real-center vector both operate on the normalized
embedding.
"""

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .autodiff import Tensor, add, record, square, sqrt, sub, tsum
from .errors import CheckpointError, ConfigError, DimensionError
from .nn import BnRunning

CHECKPOINT_MAGIC = b"RCDN1"


@dataclass
class ModelConfig:
    image_size: int = 64
    d_s: int = 256          # spatial feature width (2048 in the full-size network)
    d_f: int = 64           # frequency feature width (256 full-size)
    d_e: int = 128          # embedding width
    middle_flow_blocks: int = 2
    margin: float = 0.5
    lambda_c: float = 0.5
    lambda_s: float = 0.5
    seed: int = 0
    entry_channels: tuple = (8, 16)
    exit_channels: int = 32
    freq_channels: tuple = (6, 12, 24)
    projector_hidden: int = 256

    # total spatial downsampling: two stride-2 entry convs + entry pool = 8;
    # frequency branch pools three times = 8
    POOL_FACTOR = 8

    def validate(self):
        widths = (self.d_s, self.d_f, self.d_e, self.projector_hidden,
                  self.exit_channels, *self.entry_channels, *self.freq_channels)
        if any(w <= 0 for w in widths):
            raise ConfigError("all widths must be positive")
        if self.middle_flow_blocks < 0:
            raise ConfigError("middle_flow_blocks must be >= 0")
        if self.image_size < self.POOL_FACTOR or self.image_size % self.POOL_FACTOR:
            raise ConfigError(
                f"image_size {self.image_size} must be a positive multiple of "
                f"{self.POOL_FACTOR} (total pooling factor)")
        if len(self.entry_channels) != 2 or len(self.freq_channels) != 3:
            raise ConfigError("entry_channels needs 2 entries, freq_channels 3")
        if self.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.lambda_c < 0 or self.lambda_s < 0:
            raise ConfigError("loss weights must be >= 0")
        return self

    def to_canonical_json(self):
        d = asdict(self)
        d["entry_channels"] = list(self.entry_channels)
        d["freq_channels"] = list(self.freq_channels)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["entry_channels"] = tuple(d["entry_channels"])
        d["freq_channels"] = tuple(d["freq_channels"])
        return cls(**d).validate()


@dataclass
class EmbeddingBatch:
    """Unit-norm embeddings plus their pre-normalization values."""

    zhat: Tensor
    z: Tensor


class RcdnModel:
    """All trainable parameters plus batchnorm running statistics."""

    def __init__(self, config):
        self.config = config.validate()
        self.params = {}     # name -> Tensor(requires_grad=True)
        self.bn_state = {}   # name -> BnRunning

    # -- construction -------------------------------------------------------

    def _add_param(self, name, data):
        self.params[name] = Tensor(data, requires_grad=True)

    def _add_conv(self, rng, name, out_ch, in_ch, k, bias=True):
        fan_in = in_ch * k * k
        limit = np.sqrt(6.0 / fan_in)
        self._add_param(f"{name}.w", rng.uniform(-limit, limit, (out_ch, in_ch, k, k)))
        if bias:
            self._add_param(f"{name}.b", np.zeros(out_ch))

    def _add_bn(self, name, channels):
        self._add_param(f"{name}.g", np.ones(channels))
        self._add_param(f"{name}.b", np.zeros(channels))
        self.bn_state[name] = BnRunning(channels)

    def _add_linear(self, rng, name, d_in, d_out):
        limit = np.sqrt(6.0 / d_in)
        self._add_param(f"{name}.w", rng.uniform(-limit, limit, (d_in, d_out)))
        self._add_param(f"{name}.b", np.zeros(d_out))

    def parameters(self):
        return list(self.params.values())

    @property
    def center(self):
        return self.params["center"]

    # -- forward passes -----------------------------------------------------

    def _check_spatial_size(self, t, what):
        s = self.config.image_size
        if t.data.ndim != 4 or t.data.shape[2] != s or t.data.shape[3] != s:
            raise DimensionError(
                f"{what} spatial axes {t.data.shape[2:]} != configured ({s},{s})")

    def spatial_forward(self, images, training=False, track_stats=True):
        """Image batch N x 3 x H x W -> pooled features N x d_s."""
        self._check_spatial_size(images, "image")
        p, bn = self.params, self.bn_state
        h = nn.conv2d(images, p["s.entry.conv1.w"], p["s.entry.conv1.b"], stride=2, pad=1)
        h = nn.relu(nn.batchnorm2d(h, p["s.entry.bn1.g"], p["s.entry.bn1.b"],
                                   bn["s.entry.bn1"], training, track_stats))
        h = nn.conv2d(h, p["s.entry.conv2.w"], p["s.entry.conv2.b"], stride=2, pad=1)
        h = nn.relu(nn.batchnorm2d(h, p["s.entry.bn2.g"], p["s.entry.bn2.b"],
                                   bn["s.entry.bn2"], training, track_stats))
        h = nn.maxpool2(h)
        for i in range(self.config.middle_flow_blocks):
            t = h
            for j in range(3):
                pre = f"s.mid{i}"
                t = nn.relu(t)
                t = nn.depthwise_conv2d(t, p[f"{pre}.dw{j}.w"], stride=1, pad=1)
                t = nn.pointwise_conv2d(t, p[f"{pre}.pw{j}.w"], p[f"{pre}.pw{j}.b"])
                t = nn.batchnorm2d(t, p[f"{pre}.bn{j}.g"], p[f"{pre}.bn{j}.b"],
                                   bn[f"{pre}.bn{j}"], training, track_stats)
            h = add(h, t)  # residual skip
        h = nn.depthwise_conv2d(h, p["s.exit.dw.w"], stride=1, pad=1)
        h = nn.pointwise_conv2d(h, p["s.exit.pw.w"], p["s.exit.pw.b"])
        h = nn.relu(nn.batchnorm2d(h, p["s.exit.bn.g"], p["s.exit.bn.b"],
                                   bn["s.exit.bn"], training, track_stats))
        h = nn.global_avg_pool(h)
        return nn.linear(h, p["s.fc.w"], p["s.fc.b"])

    def frequency_forward(self, spectral, training=False, track_stats=True):
        """Spectral-map batch N x 3 x H x W -> pooled features N x d_f."""
        self._check_spatial_size(spectral, "spectral map")
        p, bn = self.params, self.bn_state
        h = spectral
        for k in range(3):
            pre = f"f.stage{k}"
            h = nn.conv2d(h, p[f"{pre}.conv.w"], p[f"{pre}.conv.b"], stride=1, pad=1)
            h = nn.relu(nn.batchnorm2d(h, p[f"{pre}.bn.g"], p[f"{pre}.bn.b"],
                                       bn[f"{pre}.bn"], training, track_stats))
            h = nn.maxpool2(h)
        h = nn.global_avg_pool(h)
        return nn.linear(h, p["f.fc.w"], p["f.fc.b"])

    def embed(self, images, spectral, training=False, track_stats=True):
        """Run both branches; returns (EmbeddingBatch, logits N x 2).

        Features are concatenated spatial-first, projected, and normalized;
        the classifier reads the normalized embedding.
        """
        p = self.params
        fs = self.spatial_forward(images, training, track_stats)
        ff = self.frequency_forward(spectral, training, track_stats)
        fc = nn.concat_features(fs, ff)
        hidden = nn.relu(nn.linear(fc, p["p.fc1.w"], p["p.fc1.b"]))
        z = nn.linear(hidden, p["p.fc2.w"], p["p.fc2.b"])
        zhat = nn.l2_normalize(z)
        logits = nn.linear(zhat, p["cls.w"], p["cls.b"])
        return EmbeddingBatch(zhat=zhat, z=z), logits

    def distance_to_center(self, zhat):
        """Euclidean distance of each embedding row to the real-center vector."""
        c = self.center
        if zhat.data.shape[1] != c.data.shape[0]:
            raise DimensionError(
                f"embedding axis {zhat.data.shape[1]} != center axis {c.data.shape[0]}")
        return sqrt(tsum(square(sub(zhat, c)), axis=1))

    def predict(self, images, spectral):
        """Infer-mode prediction: (labels, fake scores).

        Label 1 = fake iff logit_fake strictly exceeds logit_real; exact ties
        resolve to real (0).
        """
        _, logits = self.embed(images, spectral, training=False)
        ld = logits.data
        labels = (ld[:, 1] > ld[:, 0]).astype(int)
        shifted = ld - ld.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        scores = expd[:, 1] / expd.sum(axis=1)
        return labels, scores


def model_init(config):
    """Deterministic He-uniform initialization from config.seed; the real
    center starts as a uniformly random unit vector."""
    model = RcdnModel(config)
    cfg = model.config
    rng = np.random.default_rng(cfg.seed)
    c1, c2 = cfg.entry_channels
    c3 = cfg.exit_channels

    model._add_conv(rng, "s.entry.conv1", c1, 3, 3)
    model._add_bn("s.entry.bn1", c1)
    model._add_conv(rng, "s.entry.conv2", c2, c1, 3)
    model._add_bn("s.entry.bn2", c2)
    for i in range(cfg.middle_flow_blocks):
        for j in range(3):
            pre = f"s.mid{i}"
            fan = 9
            limit = np.sqrt(6.0 / fan)
            model._add_param(f"{pre}.dw{j}.w", rng.uniform(-limit, limit, (c2, 1, 3, 3)))
            model._add_conv(rng, f"{pre}.pw{j}", c2, c2, 1)
            model._add_bn(f"{pre}.bn{j}", c2)
    limit = np.sqrt(6.0 / 9)
    model._add_param("s.exit.dw.w", rng.uniform(-limit, limit, (c2, 1, 3, 3)))
    model._add_conv(rng, "s.exit.pw", c3, c2, 1)
    model._add_bn("s.exit.bn", c3)
    model._add_linear(rng, "s.fc", c3, cfg.d_s)

    prev = 3
    for k, ch in enumerate(cfg.freq_channels):
        model._add_conv(rng, f"f.stage{k}.conv", ch, prev, 3)
        model._add_bn(f"f.stage{k}.bn", ch)
        prev = ch
    model._add_linear(rng, "f.fc", prev, cfg.d_f)

    model._add_linear(rng, "p.fc1", cfg.d_s + cfg.d_f, cfg.projector_hidden)
    model._add_linear(rng, "p.fc2", cfg.projector_hidden, cfg.d_e)
    model._add_linear(rng, "cls", cfg.d_e, 2)

    c = rng.normal(size=cfg.d_e)
    model._add_param("center", c / np.linalg.norm(c))
    return model


# ---------------------------------------------------------------------------
# checkpoint container: magic, canonical-JSON config, then named arrays as
# (u16 name length, name, u8 rank, u32 extents, little-endian float64 values)

def _iter_checkpoint_arrays(model):
    for name in sorted(model.params):
        yield name, model.params[name].data
    for name in sorted(model.bn_state):
        yield f"bnstat.{name}.mean", model.bn_state[name].mean
        yield f"bnstat.{name}.var", model.bn_state[name].var


def save_checkpoint(model, path):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    cfg = model.config.to_canonical_json().encode()
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    arrays = list(_iter_checkpoint_arrays(model))
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    view = io.BytesIO(raw)
    if view.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    try:
        (cfg_len,) = struct.unpack("<I", view.read(4))
        config = ModelConfig.from_json(view.read(cfg_len).decode())
        model = model_init(config)
        (n_arrays,) = struct.unpack("<I", view.read(4))
        loaded = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<H", view.read(2))
            name = view.read(name_len).decode()
            (rank,) = struct.unpack("<B", view.read(1))
            shape = struct.unpack(f"<{rank}I", view.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(view.read(8 * count), dtype="<f8").reshape(shape)
            loaded[name] = np.asarray(data, dtype=np.float64).copy()
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint {path}: {exc}") from exc

    expected = dict(_iter_checkpoint_arrays(model))
    if set(loaded) != set(expected):
        raise CheckpointError(f"checkpoint {path} names do not match the configured model")
    for name, arr in loaded.items():
        if arr.shape != expected[name].shape:
            raise CheckpointError(f"array {name} has shape {arr.shape}, "
                                  f"expected {expected[name].shape}")
    for name in model.params:
        model.params[name].data = loaded[name]
    for name, st in model.bn_state.items():
        st.mean = loaded[f"bnstat.{name}.mean"]
        st.var = loaded[f"bnstat.{name}.var"]
    return model
