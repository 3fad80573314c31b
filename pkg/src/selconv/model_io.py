"""Model containers and binary PPM/PGM images.

A model is a directory with ``manifest.json`` and ``weights.bin``. The blob is
little-endian float32, row-major, one tensor after another in the order of
the (name-sorted) tensor table. Batch norm must be folded into ``affine_norm``
layers before export.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nets import (
    AffineNorm,
    AvgPool,
    Conv,
    Flatten,
    Kernel2D,
    Layer,
    Linear,
    MaxPool,
    PaddingMode,
    ReLU,
    Upsample,
)

FORMAT_VERSION = 1
LAYER_TYPES = ("conv", "relu", "affine_norm", "maxpool", "avgpool", "upsample", "flatten", "linear")
_LE_F32 = np.dtype("<f4")


class ModelFormatError(ValueError):
    pass


class ImageFormatError(ValueError):
    pass


@dataclass
class TensorEntry:
    shape: tuple[int, ...]
    offset: int
    length: int


@dataclass
class ModelManifest:
    layers: list[dict]
    tensors: dict[str, TensorEntry] = field(default_factory=dict)
    input_channels: int = 3
    mean: list[float] | None = None
    std: list[float] | None = None
    format_version: int = FORMAT_VERSION

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "input": {
                "channels": self.input_channels,
                "normalize": {
                    "mean": list(self.mean or [0.0] * self.input_channels),
                    "std": list(self.std or [1.0] * self.input_channels),
                },
            },
            "layers": self.layers,
            "tensors": {
                name: {"shape": list(e.shape), "offset": e.offset, "length": e.length}
                for name, e in sorted(self.tensors.items())
            },
        }

    @classmethod
    def from_json(cls, doc) -> "ModelManifest":
        try:
            if doc["format_version"] != FORMAT_VERSION:
                raise ModelFormatError(f"unsupported format_version {doc['format_version']!r}")
            layers = doc["layers"]
            if not isinstance(layers, list):
                raise ModelFormatError("'layers' must be a list")
            for i, layer in enumerate(layers):
                if layer.get("type") not in LAYER_TYPES:
                    raise ModelFormatError(f"layer {i}: unknown layer type {layer.get('type')!r}")
            tensors = {
                name: TensorEntry(tuple(int(s) for s in t["shape"]), int(t["offset"]), int(t["length"]))
                for name, t in doc["tensors"].items()
            }
            inp = doc["input"]
            norm = inp["normalize"]
            return cls(layers, tensors, int(inp["channels"]), list(norm["mean"]), list(norm["std"]))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ModelFormatError(f"malformed manifest: {exc!r}") from exc

    def validate(self, blob_size: int) -> None:
        spans = []
        for name, e in self.tensors.items():
            if any(s < 0 for s in e.shape):
                raise ModelFormatError(f"tensor {name!r}: negative dimension")
            if e.length != 4 * int(np.prod(e.shape, dtype=np.int64)):
                raise ModelFormatError(f"tensor {name!r}: shape {e.shape} does not match length {e.length}")
            if e.offset < 0 or e.offset + e.length > blob_size:
                raise ModelFormatError(f"tensor {name!r}: offset/length outside the weight blob")
            spans.append((e.offset, e.offset + e.length, name))
        spans.sort()
        for (a0, a1, an), (b0, b1, bn) in zip(spans, spans[1:]):
            if b0 < a1 and b1 > b0 and a1 > a0:
                raise ModelFormatError(f"tensor offsets overlap: {an!r} and {bn!r}")
        if self.mean is not None and len(self.mean) != self.input_channels:
            raise ModelFormatError("normalize.mean length differs from input channels")
        if self.std is not None and len(self.std) != self.input_channels:
            raise ModelFormatError("normalize.std length differs from input channels")


def save_model(manifest: ModelManifest, tensors: dict[str, np.ndarray], path) -> None:
    """Write ``manifest.json`` and ``weights.bin``; tensor offsets are recomputed."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    table = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_LE_F32)
        raw = arr.tobytes()
        table[name] = TensorEntry(tuple(arr.shape), offset, len(raw))
        chunks.append(raw)
        offset += len(raw)
    manifest.tensors = table
    text = json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n"
    (path / "manifest.json").write_text(text, encoding="utf-8")
    (path / "weights.bin").write_bytes(b"".join(chunks))


def load_model(path) -> tuple[ModelManifest, dict[str, np.ndarray]]:
    path = Path(path)
    mpath, wpath = path / "manifest.json", path / "weights.bin"
    for p in (mpath, wpath):
        if not p.is_file():
            raise FileNotFoundError(f"missing model file {p}")
    try:
        doc = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"manifest is not valid JSON: {exc}") from exc
    manifest = ModelManifest.from_json(doc)
    blob = wpath.read_bytes()
    manifest.validate(len(blob))
    tensors = {
        name: np.frombuffer(blob, dtype=_LE_F32, count=e.length // 4, offset=e.offset)
        .reshape(e.shape)
        .astype(np.float32)
        for name, e in manifest.tensors.items()
    }
    build_layers(manifest, tensors)  # surfaces unknown tensor references early
    return manifest, tensors


def _tensor(tensors, name, what):
    if name is None:
        return None
    if name not in tensors:
        raise ModelFormatError(f"{what} refers to missing tensor {name!r}")
    return tensors[name]


def build_layers(manifest: ModelManifest, tensors: dict[str, np.ndarray]) -> list[Layer]:
    layers: list[Layer] = []
    for i, spec in enumerate(manifest.layers):
        kind = spec["type"]
        where = f"layer {i} ({kind})"
        try:
            if kind == "conv":
                w = _tensor(tensors, spec["weight"], where)
                b = _tensor(tensors, spec.get("bias"), where)
                pad = spec.get("padding", "zero")
                value = spec.get("padding_value")
                padding = PaddingMode(pad, value if pad == "constant" else None)
                layers.append(
                    Conv(Kernel2D(w, b), int(spec.get("stride", 1)), int(spec.get("dilation", 1)), padding)
                )
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "affine_norm":
                layers.append(AffineNorm(_tensor(tensors, spec["scale"], where),
                                         _tensor(tensors, spec["shift"], where)))
            elif kind == "maxpool":
                layers.append(MaxPool(int(spec.get("size", 2))))
            elif kind == "avgpool":
                layers.append(AvgPool(int(spec.get("size", 2))))
            elif kind == "upsample":
                layers.append(Upsample(int(spec.get("scale", 2)), spec.get("mode", "copy")))
            elif kind == "flatten":
                if spec.get("order", "chw") != "chw":
                    raise ModelFormatError(f"{where}: only 'chw' flatten order is supported")
                layers.append(Flatten())
            elif kind == "linear":
                layers.append(Linear(_tensor(tensors, spec["weight"], where),
                                     _tensor(tensors, spec.get("bias"), where)))
            else:
                raise ModelFormatError(f"{where}: unknown layer type")
        except KeyError as exc:
            raise ModelFormatError(f"{where}: missing parameter {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"{where}: {exc}") from exc
    return layers


def export_layers(layers: list[Layer], input_channels: int = 3, mean=None, std=None):
    """Inverse of :func:`build_layers`: a manifest plus its tensor dict."""
    specs, tensors = [], {}

    def put(name, arr):
        if arr is None:
            return None
        tensors[name] = np.asarray(arr, dtype=np.float32)
        return name

    for i, layer in enumerate(layers):
        tag = f"l{i:02d}"
        if isinstance(layer, Conv):
            spec = {
                "type": "conv",
                "weight": put(f"{tag}.weight", layer.kernel.weights),
                "bias": put(f"{tag}.bias", layer.kernel.bias),
                "stride": layer.stride,
                "dilation": layer.dilation,
                "padding": layer.padding.kind,
            }
            if layer.padding.kind == "constant":
                spec["padding_value"] = [float(v) for v in layer.padding.value]
        elif isinstance(layer, ReLU):
            spec = {"type": "relu"}
        elif isinstance(layer, AffineNorm):
            spec = {"type": "affine_norm", "scale": put(f"{tag}.scale", layer.scale),
                    "shift": put(f"{tag}.shift", layer.shift)}
        elif isinstance(layer, MaxPool):
            spec = {"type": "maxpool", "size": layer.size}
        elif isinstance(layer, AvgPool):
            spec = {"type": "avgpool", "size": layer.size}
        elif isinstance(layer, Upsample):
            spec = {"type": "upsample", "scale": layer.scale, "mode": layer.mode}
        elif isinstance(layer, Flatten):
            spec = {"type": "flatten", "order": "chw"}
        elif isinstance(layer, Linear):
            spec = {"type": "linear", "weight": put(f"{tag}.weight", layer.weight),
                    "bias": put(f"{tag}.bias", layer.bias)}
        else:
            raise TypeError(f"cannot export {type(layer).__name__}")
        specs.append(spec)
    manifest = ModelManifest(specs, {}, input_channels,
                             list(mean) if mean is not None else None,
                             list(std) if std is not None else None)
    return manifest, tensors


def normalize_input(manifest: ModelManifest, x: np.ndarray) -> np.ndarray:
    """Apply the manifest's per-channel (x - mean) / std to channel-last data."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape[-1] != manifest.input_channels:
        raise ValueError(f"model expects {manifest.input_channels} channels, input has {x.shape[-1]}")
    mean = np.asarray(manifest.mean or [0.0] * manifest.input_channels, dtype=np.float32)
    std = np.asarray(manifest.std or [1.0] * manifest.input_channels, dtype=np.float32)
    return (x - mean) / std


# -- images --------------------------------------------------------------------


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated image header")
    return data[start:pos], pos


def decode_image(data: bytes) -> np.ndarray:
    """Binary P5/P6 with maxval 255 -> (H, W, C) float32 in [0, 1]."""
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported image magic {magic[:8]!r}; expected P5 or P6")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise ImageFormatError(f"bad header field {tok!r}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit images (maxval 255) are supported, got {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError("image dimensions must be positive")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return np.clip(arr.astype(np.float32) / 255.0, 0.0, 1.0)


def encode_image(image) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ImageFormatError(f"can only write 1- or 3-channel images, got shape {img.shape}")
    h, w, c = img.shape
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def write_image(image, path) -> None:
    data = encode_image(image)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
