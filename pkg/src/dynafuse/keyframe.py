"""Key-frame selection ranked by consecutive-pair structural similarity.

Low similarity between neighboring frames marks a salient pose change,
so pairs are sorted ascending by similarity and the leading frame of
each pair is picked until k key frames are collected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imgproc
from .imgproc import SsimParams
from .tensorio import Frame, VideoSequence


@dataclass(frozen=True)
class SsiiVector:
    """Similarity of each consecutive frame pair, sorted ascending.

    ``entries`` holds (pair_index, ssii) tuples with 1-based pair index i
    for the pair (frame_i, frame_{i+1}); ties sort by ascending index.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        entries = tuple((int(i), float(v)) for i, v in self.entries)
        if not all(np.isfinite(v) for _, v in entries):
            raise ValueError("similarity values must be finite")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class KeyframeSelection:
    """Strictly increasing 1-based frame indices, at most min(k, n) of them."""

    frame_indices: tuple[int, ...]
    k_requested: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.frame_indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("frame indices must be strictly increasing")
        object.__setattr__(self, "frame_indices", idx)


def preprocess_frame(frame: Frame, side: int = 227, on_silhouette: bool = True) -> Frame:
    """Silhouette -> largest component -> square ROI resize for one depth frame.

    With ``on_silhouette`` the ROI content is the binary mask itself;
    otherwise the raw depth values are cropped.  Raises on an empty
    silhouette.
    """
    mask = imgproc.silhouette(frame)
    mask = imgproc.largest_component(mask)
    source = Frame.from_array(mask.astype(np.float64)) if on_silhouette else frame
    return imgproc.roi_resize(source, mask, side=side)


def preprocess_video(
    video: VideoSequence, side: int = 227, on_silhouette: bool = True
) -> tuple[VideoSequence, list[int]]:
    """Per-frame preprocessing of a depth video.

    Frames whose silhouette comes out empty are dropped; their 1-based
    indices are returned alongside the processed video.
    """
    kept: list[Frame] = []
    dropped: list[int] = []
    for i, frame in enumerate(video.frames, start=1):
        try:
            kept.append(preprocess_frame(frame, side=side, on_silhouette=on_silhouette))
        except ValueError:
            dropped.append(i)
    if not kept:
        raise ValueError("all frames produced empty silhouettes")
    processed = VideoSequence(
        frames=tuple(kept),
        class_id=video.class_id,
        subject_id=video.subject_id,
        view_id=video.view_id,
        fps_hint=video.fps_hint,
    )
    return processed, dropped


def ssii_vector(video: VideoSequence, params: SsimParams | None = None) -> SsiiVector:
    """Similarity of every consecutive frame pair, sorted ascending.

    Frames must be single-channel and already preprocessed (silhouette /
    ROI) as far as the caller wants them to be.
    """
    n = len(video)
    if n < 2:
        raise ValueError(f"need at least 2 frames, got {n}")
    values = [
        (i, imgproc.ssim(video.frames[i - 1], video.frames[i], params).global_index)
        for i in range(1, n)
    ]
    values.sort(key=lambda e: (e[1], e[0]))
    return SsiiVector(entries=tuple(values))


def select_keyframes(
    video: VideoSequence,
    k: int = 10,
    params: SsimParams | None = None,
    keyframe_of_pair: str = "first",
) -> KeyframeSelection:
    """Pick the k frames whose pairs have the lowest similarity.

    Walks the ascending similarity vector emitting the leading frame of
    each pair (``keyframe_of_pair='second'`` emits the trailing frame
    instead), deduplicates, and backfills from the tail of the video when
    fewer than k distinct indices are available.  The result is sorted
    ascending to preserve temporal order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if keyframe_of_pair not in ("first", "second"):
        raise ValueError("keyframe_of_pair must be 'first' or 'second'")
    n = len(video)
    vec = ssii_vector(video, params)
    offset = 0 if keyframe_of_pair == "first" else 1
    want = min(k, n)
    chosen: list[int] = []
    seen: set[int] = set()
    for pair_index, _ in vec.entries:
        idx = pair_index + offset
        if idx not in seen:
            seen.add(idx)
            chosen.append(idx)
        if len(chosen) == want:
            break
    if len(chosen) < want and n not in seen:
        seen.add(n)
        chosen.append(n)
    for idx in range(1, n + 1):
        if len(chosen) == want:
            break
        if idx not in seen:
            seen.add(idx)
            chosen.append(idx)
    return KeyframeSelection(frame_indices=tuple(sorted(chosen)), k_requested=k)


@dataclass(frozen=True)
class KeyframeStack:
    """Preprocessed key frames stacked [K, side, side] in temporal order.

    ``dropped_indices`` lists selected frames that had to be skipped
    because their silhouette was empty.
    """

    frames: np.ndarray
    frame_indices: tuple[int, ...]
    dropped_indices: tuple[int, ...]

    @property
    def warning_count(self) -> int:
        return len(self.dropped_indices)


def keyframe_stack(
    video: VideoSequence,
    selection: KeyframeSelection,
    side: int = 227,
    on_silhouette: bool = True,
) -> KeyframeStack:
    """Preprocess each selected frame of the raw depth video and stack them."""
    kept: list[np.ndarray] = []
    kept_idx: list[int] = []
    dropped: list[int] = []
    for idx in selection.frame_indices:
        if not 1 <= idx <= len(video):
            raise ValueError(f"frame index {idx} outside video of length {len(video)}")
        try:
            frame = preprocess_frame(video.frames[idx - 1], side=side, on_silhouette=on_silhouette)
        except ValueError:
            dropped.append(idx)
            continue
        kept.append(frame.plane(0))
        kept_idx.append(idx)
    if not kept:
        raise ValueError("empty stack: every selected frame had an empty silhouette")
    return KeyframeStack(
        frames=np.stack(kept),
        frame_indices=tuple(kept_idx),
        dropped_indices=tuple(dropped),
    )
