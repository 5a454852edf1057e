"""Model configuration, parameter initialization, ADAM, and weight-file IO.

Parameters are a flat name-to-Tensor dict in float32. The weight file is a
small self-describing binary: magic ``OPDE``, a u32 format version, a table
of (name, shape, offset) entries, then raw little-endian float32 payloads.
Reserved double-underscore names carry keypoints and normalization metadata
alongside the learned weights so a single file restores inference exactly.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import DataError, NumericalError

WEIGHT_MAGIC = b"OPDE"
WEIGHT_VERSION = 1

ABLATIONS = ("full", "omit_spatial", "omit_features")


@dataclass(frozen=True)
class ModelConfig:
    n_points: int = 4096
    in_dims: int = 6
    k_neighbors: int = 20
    feature_dim: int = 64
    n_keypoints: int = 32
    n_samples: int = 720
    agg_hidden: int = 64
    head_hidden: int = 256
    dropout_rate: float = 0.1
    ablation: str = "full"

    def __post_init__(self):
        sizes = (
            self.n_points, self.in_dims, self.k_neighbors, self.feature_dim,
            self.n_keypoints, self.n_samples, self.agg_hidden, self.head_hidden,
        )
        if any(s <= 0 for s in sizes):
            raise ValueError("all ModelConfig sizes must be positive")
        if self.feature_dim % 2 != 0:
            raise ValueError("feature_dim must be even (split point/context)")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")

    @property
    def fused_in(self) -> int:
        """Input width of the fusion layer; one branch under ablation."""
        return self.agg_hidden if self.ablation != "full" else 2 * self.agg_hidden

    def layer_shapes(self) -> dict:
        """Name -> shape for every learnable tensor (pure function of config)."""
        f, half = self.feature_dim, self.feature_dim // 2
        a, hh = self.agg_hidden, self.head_hidden
        shapes = {
            "enc_edge1_w": (2 * self.in_dims, f), "enc_edge1_b": (f,),
            "enc_edge2_w": (f, f), "enc_edge2_b": (f,),
            "enc_point1_w": (f, f), "enc_point1_b": (f,),
            "enc_point2_w": (f, half), "enc_point2_b": (half,),
            "agg_fuse_w": (self.fused_in, a), "agg_fuse_b": (a,),
            "head1_w": (self.n_keypoints * a, hh), "head1_b": (hh,),
            "head2_w": (hh, hh), "head2_b": (hh,),
            "head3_w": (hh, 1), "head3_b": (1,),
        }
        if self.ablation != "omit_spatial":
            shapes.update({
                "agg_hx1_w": (3, a), "agg_hx1_b": (a,),
                "agg_hx2_w": (a, a), "agg_hx2_b": (a,),
            })
        if self.ablation != "omit_features":
            shapes.update({
                "agg_hf1_w": (f, a), "agg_hf1_b": (a,),
                "agg_hf2_w": (a, a), "agg_hf2_b": (a,),
            })
        return shapes

    def n_parameters(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes().values())

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                self.n_points, self.in_dims, self.k_neighbors, self.feature_dim,
                self.n_keypoints, self.n_samples, self.agg_hidden, self.head_hidden,
                self.dropout_rate, float(ABLATIONS.index(self.ablation)),
            ],
            dtype=np.float32,
        )

    @staticmethod
    def from_vector(v: np.ndarray) -> "ModelConfig":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (10,):
            raise DataError("config vector must have 10 entries")
        return ModelConfig(
            n_points=int(v[0]), in_dims=int(v[1]), k_neighbors=int(v[2]),
            feature_dim=int(v[3]), n_keypoints=int(v[4]), n_samples=int(v[5]),
            agg_hidden=int(v[6]), head_hidden=int(v[7]),
            dropout_rate=float(v[8]), ablation=ABLATIONS[int(v[9])],
        )


def init_params(config: ModelConfig, seed: int = 0) -> dict:
    """He-initialized float32 parameters keyed by layer name."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in sorted(config.layer_shapes().items()):
        if name.endswith("_b"):
            data = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[0]
            std = np.sqrt(2.0 / fan_in)
            if name == "head3_w":
                std = np.sqrt(1.0 / fan_in)  # linear output layer
            data = (std * rng.standard_normal(shape)).astype(np.float32)
        params[name] = Tensor(data, requires_grad=True)
    return params


@contextmanager
def eval_mode(params: dict):
    """Temporarily disable gradient tracking so forwards skip graph building."""
    saved = {k: p.requires_grad for k, p in params.items()}
    for p in params.values():
        p.requires_grad = False
    try:
        yield params
    finally:
        for k, p in params.items():
            p.requires_grad = saved[k]


def zero_grads(params: dict) -> None:
    for p in params.values():
        p.grad = None


def scale_grads(params: dict, factor: float) -> None:
    for p in params.values():
        if p.grad is not None:
            p.grad *= factor


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict

    @staticmethod
    def zeros(params: dict) -> "AdamState":
        return AdamState(
            step=0,
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(params: dict, state: AdamState, lr: float = 1e-4,
              betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """One ADAM update in place; parameters without gradients are skipped."""
    b1, b2 = betas
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name!r} at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


def dropout(x: Tensor, rate: float, rng, training: bool) -> Tensor:
    """Inverted dropout: zero units with prob. rate, scale survivors."""
    if not training or rate == 0:
        return x
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    mask = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * Tensor(mask)


# ---------------------------------------------------------------------------
# weight file


def save_weights(path, arrays: dict) -> None:
    """Write named float32 arrays; layout: header, entry table, payloads."""
    names = sorted(arrays)
    table = b""
    payload = b""
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        nb = name.encode("utf-8")
        table += struct.pack("<H", len(nb)) + nb
        table += struct.pack("<B", arr.ndim)
        table += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        table += struct.pack("<Q", offset)
        payload += arr.tobytes()
        offset += arr.nbytes
    header = WEIGHT_MAGIC + struct.pack("<II", WEIGHT_VERSION, len(names))
    with open(path, "wb") as f:
        f.write(header + table + payload)


def load_weights(path) -> dict:
    """Read a weight file back into a name -> float32 ndarray dict."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read weight file {path}: {e}") from e
    if blob[:4] != WEIGHT_MAGIC:
        raise DataError(f"{path}: not a weight file (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != WEIGHT_VERSION:
            raise DataError(f"unsupported weight format version {version}")
        pos = 12
        entries = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos) if ndim else ()
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            entries.append((name, shape, offset))
        out = {}
        for name, shape, offset in entries:
            n = int(np.prod(shape)) if shape else 1
            start = pos + offset
            if start + 4 * n > len(blob):
                raise DataError(f"{path}: truncated payload for {name!r}")
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=start)
            out[name] = arr.reshape(shape).copy()
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise DataError(f"{path}: corrupt weight file ({e})") from e
    return out


def params_to_arrays(params: dict) -> dict:
    return {k: p.data for k, p in params.items()}


def arrays_to_params(arrays: dict, config: ModelConfig) -> dict:
    """Validate shapes against the config and wrap as trainable tensors."""
    shapes = config.layer_shapes()
    missing = sorted(set(shapes) - set(arrays))
    if missing:
        raise DataError(f"weight file missing tensors: {missing}")
    params = {}
    for name, shape in shapes.items():
        arr = np.asarray(arrays[name], dtype=np.float32)
        if arr.shape != shape:
            raise DataError(f"{name}: stored shape {arr.shape}, expected {shape}")
        params[name] = Tensor(arr.copy(), requires_grad=True)
    return params
