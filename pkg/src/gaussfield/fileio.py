"""Bit-exact file formats: PNG images, model checkpoints, edit scripts, and
animation manifests.

Checkpoints are a single binary container: a magic tag, a version, a
canonical JSON header (sorted keys, no whitespace) describing the config and
an array manifest, then the arrays as little-endian float32 in manifest
order. Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import encoding, net, spatial
from .core import GaussFieldError, GaussianSet, ImageBuffer, ModelConfig
from .edit import Selection, Transform
from .field import Model

MAGIC = b"GNRC"
VERSION = 1


class FormatError(GaussFieldError):
    """Base class for file-format problems."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ManifestError(FormatError):
    """Header manifest and payload bytes disagree."""


class UnsupportedImageError(FormatError):
    pass


class ScriptParseError(FormatError):
    """Edit script is not valid JSON; carries line/column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ScriptSemanticError(FormatError):
    """Edit script parsed but an op is invalid; carries the op index."""

    def __init__(self, op_index: int, message: str):
        super().__init__(f"op {op_index}: {message}")
        self.op_index = op_index


class AnimationError(FormatError):
    """Animation manifest or frame file problem."""


# ---------------------------------------------------------------------------
# PNG images


def quantize_unit(data: np.ndarray) -> np.ndarray:
    """Unit-interval floats to 8-bit, rounding half up."""
    return np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageBuffer:
    """Read an 8-bit RGB or RGBA PNG; values scale to [0, 1]."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise UnsupportedImageError(f"cannot read image {path}: {exc}") from exc
    if img.format != "PNG":
        raise UnsupportedImageError(f"unsupported format {img.format!r}; expected PNG")
    if img.mode not in ("RGB", "RGBA"):
        raise UnsupportedImageError(
            f"unsupported PNG mode {img.mode!r}; expected 8-bit RGB or RGBA"
        )
    data = np.asarray(img, dtype=np.float64) / 255.0
    return ImageBuffer.from_array(data)


def save_image(buf: ImageBuffer, path) -> None:
    """Write an ImageBuffer as an 8-bit PNG (round-half-up quantization)."""
    arr = quantize_unit(buf.data)
    Image.fromarray(arr, mode="RGBA" if buf.channels == 4 else "RGB").save(
        path, format="PNG"
    )


def encode_png(buf: ImageBuffer) -> bytes:
    """PNG bytes of a buffer, identical to save_image's file content."""
    out = io.BytesIO()
    save_image(buf, out)
    return out.getvalue()


# ---------------------------------------------------------------------------
# Checkpoints


def _model_arrays(model: Model) -> list[tuple[str, np.ndarray]]:
    arrays = [
        ("means", model.gaussians.means),
        ("cov_params", model.gaussians.cov_params),
    ]
    if model.baked:
        arrays.append(("embeddings", model.gaussians.embeddings))
    else:
        arrays.append(("grid_tables", model.grid.tables))
    arrays.append(("color_mlp", model.color_mlp.theta))
    if model.mask_mlp is not None:
        arrays.append(("mask_mlp", model.mask_mlp.theta))
    return arrays


def checkpoint_bytes(model: Model) -> bytes:
    """Serialize a model to the single-file checkpoint container."""
    arrays = _model_arrays(model)
    header = {
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
        "baked": model.baked,
        "channels": model.channels,
        "config": model.config.to_dict(),
        "count": model.gaussians.count,
        "embed_dim": model.config.embed_dim,
        "height": model.train_height,
        "width": model.train_width,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(header_bytes)), header_bytes]
    for _, a in arrays:
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def model_from_bytes(blob: bytes) -> Model:
    """Parse a checkpoint container back into a model."""
    if len(blob) < 4:
        raise TruncatedError("file shorter than the magic tag")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}; expected {MAGIC!r}")
    if len(blob) < 12:
        raise TruncatedError("file ends inside the fixed header")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    if len(blob) < 12 + header_len:
        raise TruncatedError("file ends inside the JSON header")
    try:
        header = json.loads(blob[12:12 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"unreadable header: {exc}") from exc

    try:
        cfg = ModelConfig.from_dict(header["config"])
        manifest = header["arrays"]
        count = header["count"]
        baked = header["baked"]
        channels = header["channels"]
        width, height = header["width"], header["height"]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"header missing field: {exc}") from exc

    payload = blob[12 + header_len:]
    arrays = {}
    off = 0
    for entry in manifest:
        shape = tuple(entry["shape"])
        n_bytes = int(np.prod(shape)) * 4
        if off + n_bytes > len(payload):
            raise TruncatedError(
                f"payload ends inside array {entry['name']!r}"
            )
        arr = np.frombuffer(payload[off:off + n_bytes], dtype="<f4").reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
        off += n_bytes
    if off != len(payload):
        raise ManifestError(
            f"payload has {len(payload) - off} bytes beyond the manifest"
        )

    expected = ["means", "cov_params"]
    expected.append("embeddings" if baked else "grid_tables")
    expected.append("color_mlp")
    if channels == 4:
        expected.append("mask_mlp")
    if [e["name"] for e in manifest] != expected:
        raise ManifestError(
            f"array manifest {[e['name'] for e in manifest]} != expected {expected}"
        )
    if arrays["means"].shape != (count, 2):
        raise ManifestError(f"means shape {arrays['means'].shape} != ({count}, 2)")
    if arrays["cov_params"].shape != (count, 3):
        raise ManifestError(f"cov_params shape mismatch")

    d = cfg.embed_dim
    if baked:
        if arrays["embeddings"].shape != (count, d):
            raise ManifestError("embeddings shape mismatch")
        gaussians = GaussianSet(
            means=arrays["means"],
            cov_params=arrays["cov_params"],
            embeddings=arrays["embeddings"],
            baked=True,
        )
        grid = None
    else:
        table_size = 1 << cfg.hash_table_log2
        shape = (cfg.levels, table_size, cfg.features_per_level)
        if arrays["grid_tables"].shape != shape:
            raise ManifestError(
                f"grid tables shape {arrays['grid_tables'].shape} != {shape}"
            )
        gaussians = GaussianSet(means=arrays["means"], cov_params=arrays["cov_params"])
        grid = encoding.HashGrid(
            levels=cfg.levels,
            feature_dim=cfg.features_per_level,
            table_size=table_size,
            resolutions=encoding.level_resolutions(cfg.min_res, cfg.max_res, cfg.levels),
            growth=(
                float(np.exp((np.log(cfg.max_res) - np.log(cfg.min_res)) / (cfg.levels - 1)))
                if cfg.levels > 1
                else 1.0
            ),
            tables=arrays["grid_tables"],
        )

    hidden = [cfg.mlp_hidden_width] * cfg.mlp_hidden_layers
    color_widths = tuple([d] + hidden + [3])
    if arrays["color_mlp"].shape != (net.param_count(color_widths),):
        raise ManifestError("color decoder parameter count mismatch")
    color_mlp = net.Mlp(widths=color_widths, theta=arrays["color_mlp"])
    mask_mlp = None
    if channels == 4:
        mask_widths = tuple([d] + hidden + [1])
        if arrays["mask_mlp"].shape != (net.param_count(mask_widths),):
            raise ManifestError("mask decoder parameter count mismatch")
        mask_mlp = net.Mlp(widths=mask_widths, theta=arrays["mask_mlp"])

    return Model(
        config=cfg,
        gaussians=gaussians,
        grid=grid,
        color_mlp=color_mlp,
        mask_mlp=mask_mlp,
        index=spatial.build_index(gaussians.means, cfg.knn_radius),
        channels=channels,
        train_width=width,
        train_height=height,
    )


def load_checkpoint(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())


def canonicalize(model: Model) -> Model:
    """Round-trip a model through the file encoding in memory.

    All renders of the result are byte-identical to renders of a model
    saved to disk and reloaded; services use this at version boundaries.
    """
    return model_from_bytes(checkpoint_bytes(model))


# ---------------------------------------------------------------------------
# Edit scripts


def _parse_selection(op_index: int, obj) -> Selection:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ScriptSemanticError(op_index, "select must be an object with a kind")
    kind = obj["kind"]
    try:
        if kind == "all":
            return Selection(kind="all")
        if kind == "indices":
            return Selection(kind="indices", indices=obj["indices"])
        if kind == "rect":
            return Selection(kind="rect", rect_min=obj["min"], rect_max=obj["max"])
        if kind == "polygon":
            return Selection(kind="polygon", polygon=obj["vertices"])
    except KeyError as exc:
        raise ScriptSemanticError(op_index, f"select {kind!r} missing {exc}") from exc
    except GaussFieldError as exc:
        raise ScriptSemanticError(op_index, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ScriptSemanticError(op_index, f"bad select payload: {exc}") from exc
    raise ScriptSemanticError(op_index, f"unknown selection kind {kind!r}")


def _parse_transform(op_index: int, obj) -> Transform:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ScriptSemanticError(op_index, "transform must be an object with a kind")
    kind = obj["kind"]
    try:
        if kind == "translate":
            return Transform(kind="translate", vector=obj["v"])
        if kind == "rotate":
            return Transform(kind="rotate", center=obj["center"], angle=obj["angle"])
        if kind == "scale":
            return Transform(
                kind="scale", center=obj["center"], sx=obj["sx"], sy=obj["sy"]
            )
        if kind == "displace":
            return Transform(kind="displace", offsets=obj["offsets"])
    except KeyError as exc:
        raise ScriptSemanticError(op_index, f"transform {kind!r} missing {exc}") from exc
    except GaussFieldError as exc:
        raise ScriptSemanticError(op_index, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ScriptSemanticError(op_index, f"bad transform payload: {exc}") from exc
    raise ScriptSemanticError(op_index, f"unknown transform kind {kind!r}")


def parse_edit_ops(ops) -> list[tuple[Selection, Transform]]:
    """Validate a decoded op list (shared by the script parser and service)."""
    if not isinstance(ops, list):
        raise ScriptSemanticError(0, '"ops" must be a list')
    out = []
    for i, op in enumerate(ops):
        if not isinstance(op, dict) or "select" not in op or "transform" not in op:
            raise ScriptSemanticError(i, 'each op needs "select" and "transform"')
        out.append((_parse_selection(i, op["select"]), _parse_transform(i, op["transform"])))
    return out


def parse_edit_script(text: str) -> list[tuple[Selection, Transform]]:
    """Parse an edit script document into ordered (Selection, Transform) ops."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptParseError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict) or "ops" not in doc:
        raise ScriptSemanticError(0, 'document must be an object with an "ops" list')
    return parse_edit_ops(doc["ops"])


# ---------------------------------------------------------------------------
# Animation manifests


@dataclass
class AnimationManifest:
    """Frame-position files for replay; positions load lazily per frame."""

    count: int
    frame_paths: list[Path]

    def __len__(self) -> int:
        return len(self.frame_paths)

    def read_frame(self, k: int) -> np.ndarray:
        """Positions (count, 2) of frame k; validates the file length."""
        path = self.frame_paths[k]
        try:
            raw = path.read_bytes()
        except FileNotFoundError as exc:
            raise AnimationError(f"frame file missing: {path}") from exc
        values = np.frombuffer(raw, dtype="<f4")
        if values.size != 2 * self.count:
            raise AnimationError(
                f"frame {path.name}: expected {2 * self.count} floats, "
                f"got {values.size}"
            )
        return values.astype(np.float64).reshape(self.count, 2)


def parse_animation_manifest(path) -> AnimationManifest:
    """Read a manifest document; frame files must exist, lengths check later."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise AnimationError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "n" not in doc or "frames" not in doc:
        raise AnimationError('manifest must be an object with "n" and "frames"')
    count = doc["n"]
    if not isinstance(count, int) or count < 1:
        raise AnimationError(f'"n" must be a positive integer, got {count!r}')
    if not isinstance(doc["frames"], list):
        raise AnimationError('"frames" must be a list of file names')
    frame_paths = [path.parent / f for f in doc["frames"]]
    for p in frame_paths:
        if not p.is_file():
            raise AnimationError(f"frame file missing: {p}")
    return AnimationManifest(count=count, frame_paths=frame_paths)
