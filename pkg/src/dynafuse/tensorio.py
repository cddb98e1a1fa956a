"""Core frame/sequence types and the binary file formats shared by all modules.

Two on-disk formats are supported:

* binary portable graymap/pixmap (P5/P6) for single frames, and
* a small tensor container ("RPT1") for feature sequences, frame stacks
  and model weights: magic ``RPT1``, u32 rank, u32 dims, float32 payload
  in C order, optional trailing UTF-8 JSON metadata.  All multibyte
  integers are little-endian, including 16-bit graymap/pixmap samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_ALIASES = {
    "pgm": "pgm",
    "ppm": "ppm",
    "portable-graymap": "pgm",
    "portable-pixmap": "ppm",
}

_MAGIC_BY_FORMAT = {"pgm": b"P5", "ppm": b"P6"}
_FORMAT_BY_MAGIC = {b"P5": "pgm", b"P6": "ppm"}
_TENSOR_MAGIC = b"RPT1"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Frame:
    """A single image: planar channel-major float array of shape (C, H, W)."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("frame dimensions must be positive")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.channels, self.height, self.width):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"({self.channels}, {self.height}, {self.width})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("frame data contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Frame":
        """Build a frame from a 2-D (H, W) or 3-D (C, H, W) array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValueError(f"expected 2-D or 3-D array, got ndim={arr.ndim}")
        c, h, w = arr.shape
        return cls(height=h, width=w, channels=c, data=arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def plane(self, channel: int = 0) -> np.ndarray:
        """The (H, W) view of one channel."""
        return self.data[channel]


@dataclass(frozen=True)
class VideoSequence:
    """Temporally ordered frames with class/subject/view metadata.

    Frame order is temporal order; formulas downstream index frames
    1-based.
    """

    frames: tuple[Frame, ...]
    class_id: int = 0
    subject_id: int = 0
    view_id: int = 0
    fps_hint: float | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if any(f.shape != frames[0].shape for f in frames[1:]):
            raise ValueError("all frames of a sequence must share one shape")
        for name in ("class_id", "subject_id", "view_id"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        if not self.frames:
            raise ValueError("empty video has no frame shape")
        return self.frames[0].shape


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame feature vectors: an (N, d) array plus sequence metadata."""

    vectors: np.ndarray
    class_id: int = 0
    subject_id: int = 0
    view_id: int = 0
    fps_hint: float | None = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D (N, d), got ndim={vectors.ndim}")
        if vectors.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("feature vectors contain non-finite values")
        object.__setattr__(self, "vectors", _freeze(vectors))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


# ---------------------------------------------------------------------------
# Portable graymap / pixmap (binary P5 / P6)
# ---------------------------------------------------------------------------


class _Tokenizer:
    """Header tokenizer tracking byte offsets for error messages.

    Whitespace separates tokens; '#' starts a comment running to end of
    line, as in the netpbm family.
    """

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def _skip_space(self) -> None:
        while self.pos < len(self.blob):
            b = self.blob[self.pos]
            if b in b" \t\r\n":
                self.pos += 1
            elif b == ord("#"):
                while self.pos < len(self.blob) and self.blob[self.pos] != ord("\n"):
                    self.pos += 1
            else:
                return

    def next_int(self, what: str) -> int:
        self._skip_space()
        start = self.pos
        while self.pos < len(self.blob) and self.blob[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if start == self.pos:
            raise ValueError(f"parse error at byte {start}: expected {what}")
        return int(self.blob[start : self.pos])

    def payload_start(self) -> int:
        """Consume the single whitespace byte that terminates the header."""
        if self.pos >= len(self.blob) or self.blob[self.pos] not in b" \t\r\n":
            raise ValueError(
                f"parse error at byte {self.pos}: expected whitespace before payload"
            )
        return self.pos + 1


def read_frame(path, format: str | None = None) -> Frame:
    """Read a binary P5 graymap or P6 pixmap into a [0, 1] intensity frame.

    ``format`` may name the expected format ('pgm'/'portable-graymap' or
    'ppm'/'portable-pixmap'); a mismatch with the file magic is a parse
    error.  With ``format=None`` the magic decides.
    """
    blob = Path(path).read_bytes()
    magic = blob[:2]
    if magic not in _FORMAT_BY_MAGIC:
        raise ValueError(f"parse error at byte 0: bad magic {magic!r}, expected P5 or P6")
    fmt = _FORMAT_BY_MAGIC[magic]
    if format is not None:
        want = FORMAT_ALIASES.get(format)
        if want is None:
            raise ValueError(f"unknown frame format {format!r}")
        if want != fmt:
            raise ValueError(f"parse error at byte 0: file is {fmt}, expected {want}")
    tok = _Tokenizer(blob)
    tok.pos = 2
    width = tok.next_int("width")
    height = tok.next_int("height")
    maxval = tok.next_int("maxval")
    if width < 1 or height < 1:
        raise ValueError(f"parse error at byte 2: non-positive dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise ValueError(f"parse error at byte {tok.pos}: maxval must be 255 or 65535")
    start = tok.payload_start()
    channels = 1 if fmt == "pgm" else 3
    count = width * height * channels
    dtype = np.dtype(np.uint8) if maxval == 255 else np.dtype("<u2")
    need = count * dtype.itemsize
    payload = blob[start : start + need]
    if len(payload) < need:
        raise ValueError(
            f"parse error at byte {start + len(payload)}: "
            f"payload truncated ({len(payload)} of {need} bytes)"
        )
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    # interleaved (H, W, C) on disk -> planar (C, H, W)
    data = raw.reshape(height, width, channels).transpose(2, 0, 1) / float(maxval)
    return Frame(height=height, width=width, channels=channels, data=data)


def write_frame(frame: Frame, path, format: str, maxval: int = 255) -> None:
    """Write a frame as binary P5/P6, quantizing intensities to maxval steps."""
    fmt = FORMAT_ALIASES.get(format)
    if fmt is None:
        raise ValueError(f"unknown frame format {format!r}")
    want_channels = 1 if fmt == "pgm" else 3
    if frame.channels != want_channels:
        raise ValueError(
            f"channel mismatch: {fmt} needs {want_channels} channels, "
            f"frame has {frame.channels}"
        )
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    header = f"{_MAGIC_BY_FORMAT[fmt].decode()}\n{frame.width} {frame.height}\n{maxval}\n"
    quant = np.clip(np.round(frame.data * maxval), 0, maxval)
    dtype = np.uint8 if maxval == 255 else np.dtype("<u2")
    interleaved = quant.transpose(1, 2, 0).astype(dtype)
    Path(path).write_bytes(header.encode("ascii") + interleaved.tobytes())


# ---------------------------------------------------------------------------
# RPT1 tensor container
# ---------------------------------------------------------------------------


def write_tensor(array: np.ndarray, metadata: dict | None, path) -> None:
    """Write an array as an RPT1 tensor file; round-trips bit-exactly.

    The payload is stored as float32; pass float32 input for bit-exact
    round trips.  ``metadata`` (when given) must be a JSON-serializable
    dict and is appended verbatim as UTF-8 JSON.
    """
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if arr.ndim < 1 or any(d < 1 for d in arr.shape):
        raise ValueError(f"tensor must have rank >= 1 and positive dims, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor payload contains non-finite values")
    dims = np.asarray(arr.shape, dtype="<u4")
    rank = np.asarray([arr.ndim], dtype="<u4")
    parts = [_TENSOR_MAGIC, rank.tobytes(), dims.tobytes(), arr.astype("<f4").tobytes()]
    if metadata is not None:
        parts.append(json.dumps(metadata, sort_keys=True).encode("utf-8"))
    Path(path).write_bytes(b"".join(parts))


def read_tensor(path) -> tuple[np.ndarray, dict | None]:
    """Read an RPT1 tensor file, returning (float32 array, metadata or None)."""
    blob = Path(path).read_bytes()
    if blob[:4] != _TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic {blob[:4]!r}, expected {_TENSOR_MAGIC!r}")
    if len(blob) < 8:
        raise ValueError("tensor header truncated")
    rank = int(np.frombuffer(blob, dtype="<u4", count=1, offset=4)[0])
    if rank < 1:
        raise ValueError("tensor rank must be >= 1")
    dims_end = 8 + 4 * rank
    if len(blob) < dims_end:
        raise ValueError("tensor dims truncated")
    dims = np.frombuffer(blob, dtype="<u4", count=rank, offset=8).astype(np.int64)
    if np.any(dims < 1):
        raise ValueError(f"tensor dims must be positive, got {dims.tolist()}")
    count = int(np.prod(dims))
    payload_end = dims_end + 4 * count
    if len(blob) < payload_end:
        raise ValueError(
            f"tensor payload length mismatch: need {4 * count} bytes, "
            f"have {len(blob) - dims_end}"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=dims_end)
    arr = arr.reshape(tuple(dims)).astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor payload contains non-finite values")
    metadata = None
    trailer = blob[payload_end:]
    if trailer:
        try:
            metadata = json.loads(trailer.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"bad tensor metadata block: {exc}") from exc
    return arr, metadata


def write_feature_sequence(seq: FeatureSequence, path) -> None:
    """Serialize an (N, d) feature sequence with its metadata."""
    meta = {
        "class_id": seq.class_id,
        "subject_id": seq.subject_id,
        "view_id": seq.view_id,
    }
    if seq.fps_hint is not None:
        meta["fps_hint"] = seq.fps_hint
    write_tensor(seq.vectors.astype(np.float32), meta, path)


def read_feature_sequence(path) -> FeatureSequence:
    """Read a rank-2 RPT1 file back into a FeatureSequence."""
    arr, meta = read_tensor(path)
    if arr.ndim != 2:
        raise ValueError(f"feature sequence must be rank 2, got rank {arr.ndim}")
    meta = meta or {}
    return FeatureSequence(
        vectors=arr.astype(np.float64),
        class_id=int(meta.get("class_id", 0)),
        subject_id=int(meta.get("subject_id", 0)),
        view_id=int(meta.get("view_id", 0)),
        fps_hint=meta.get("fps_hint"),
    )


def video_from_frame_files(
    paths: Sequence, class_id: int = 0, subject_id: int = 0, view_id: int = 0
) -> VideoSequence:
    """Load an ordered list of P5/P6 files as one video."""
    frames = tuple(read_frame(p) for p in paths)
    if not frames:
        raise ValueError("cannot build a video from zero frame files")
    return VideoSequence(
        frames=frames, class_id=class_id, subject_id=subject_id, view_id=view_id
    )
