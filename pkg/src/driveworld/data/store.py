"""On-disk dataset format.

Layout::

    <root>/manifest.json              # written last: the commit point
    <root>/clips/<clip_id>/video.bin
    <root>/clips/<clip_id>/layouts.bin
    <root>/clips/<clip_id>/meta.json

``video.bin`` is little-endian float16, row-major [T, K, 3, H, W], preceded by
a 16-byte header: magic ``MVWC``, version u16, then T, K, H, W as u16 and two
pad bytes.  ``layouts.bin`` holds two such blocks back to back: ``MVWL`` with
the perspective rasters [T, K, 3, H, W] and ``MVWB`` with the BEV rasters
[T, 3, B, B] (K field = 1, H = W = B).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..world import Lighting, SceneMeta, Weather
from .binning import ActionBin, ClipIndex
from .clips import MultiviewClip

MAGIC_VIDEO = b"MVWC"
MAGIC_LAYOUT = b"MVWL"
MAGIC_BEV = b"MVWB"
VERSION = 1
HEADER = struct.Struct("<4sHHHHHxx")
assert HEADER.size == 16


class FormatError(ValueError):
    """Corrupt or truncated dataset file."""


def _write_block(fh, magic: bytes, array: np.ndarray, t: int, k: int, h: int, w: int):
    fh.write(HEADER.pack(magic, VERSION, t, k, h, w))
    fh.write(np.ascontiguousarray(array, dtype="<f2").tobytes())


def _read_block(buf: bytes, offset: int, magic: bytes, channels: int,
                path: Path) -> tuple[np.ndarray, int]:
    if len(buf) < offset + HEADER.size:
        raise FormatError(f"{path}: truncated header at byte {offset}")
    got_magic, version, t, k, h, w = HEADER.unpack_from(buf, offset)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r} at byte {offset}, "
                          f"expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte {offset}")
    count = t * k * channels * h * w
    start = offset + HEADER.size
    end = start + count * 2
    if len(buf) < end:
        raise FormatError(f"{path}: expected {end} bytes, got {len(buf)} "
                          f"(block at byte {offset})")
    arr = np.frombuffer(buf, dtype="<f2", count=count, offset=start)
    shape = (t, channels, h, w) if magic == MAGIC_BEV else (t, k, channels, h, w)
    return arr.reshape(shape), end


def save_clip(clip: MultiviewClip, clip_dir: Path) -> None:
    clip_dir.mkdir(parents=True, exist_ok=True)
    t, k, _, h, w = clip.video.shape
    with open(clip_dir / "video.bin", "wb") as fh:
        _write_block(fh, MAGIC_VIDEO, clip.video, t, k, h, w)
    b = clip.layouts_bev.shape[-1]
    with open(clip_dir / "layouts.bin", "wb") as fh:
        _write_block(fh, MAGIC_LAYOUT, clip.layouts_persp, t, k, h, w)
        _write_block(fh, MAGIC_BEV, clip.layouts_bev, t, 1, b, b)
    meta = {
        "clip_id": clip.clip_id,
        "actions": clip.actions.tolist(),
        "ego_trajectory": clip.ego_trajectory.tolist(),
        "weather": int(clip.meta.weather),
        "lighting": int(clip.meta.lighting),
    }
    (clip_dir / "meta.json").write_text(json.dumps(meta))


def load_clip(clip_dir: Path) -> MultiviewClip:
    video_path = clip_dir / "video.bin"
    video, _ = _read_block(video_path.read_bytes(), 0, MAGIC_VIDEO, 3, video_path)
    layout_path = clip_dir / "layouts.bin"
    buf = layout_path.read_bytes()
    persp, end = _read_block(buf, 0, MAGIC_LAYOUT, 3, layout_path)
    bev, _ = _read_block(buf, end, MAGIC_BEV, 3, layout_path)
    meta = json.loads((clip_dir / "meta.json").read_text())
    return MultiviewClip(
        clip_id=meta["clip_id"],
        video=np.asarray(video, dtype=np.float32),
        layouts_persp=np.asarray(persp, dtype=np.float32),
        layouts_bev=np.asarray(bev, dtype=np.float32),
        actions=np.asarray(meta["actions"], dtype=np.float32),
        ego_trajectory=np.asarray(meta["ego_trajectory"], dtype=np.float32),
        meta=SceneMeta(Weather(meta["weather"]), Lighting(meta["lighting"])),
    )


@dataclass
class Dataset:
    """Lazy reader over an exported dataset directory."""

    root: Path
    manifest: dict

    @property
    def clip_ids(self) -> list[str]:
        return [c["id"] for c in self.manifest["clips"]]

    def entry(self, clip_id: str) -> dict:
        for c in self.manifest["clips"]:
            if c["id"] == clip_id:
                return c
        raise KeyError(clip_id)

    def load(self, clip_id: str) -> MultiviewClip:
        return load_clip(self.root / "clips" / clip_id)

    def index(self) -> ClipIndex:
        idx = ClipIndex(seed=self.manifest.get("seed", 0))
        for c in self.manifest["clips"]:
            idx.entries.append(
                (c["id"], ActionBin(*c["bin"]), c["behavior"]))
        return idx

    def __len__(self) -> int:
        return len(self.manifest["clips"])


def export_dataset(clips: list[MultiviewClip], path: str | Path,
                   entries: list[dict] | None = None, seed: int = 0,
                   extra: dict | None = None) -> Dataset:
    """Write clips then the manifest (single writer; manifest commits)."""
    root = Path(path)
    (root / "clips").mkdir(parents=True, exist_ok=True)
    for clip in clips:
        save_clip(clip, root / "clips" / clip.clip_id)
    if entries is None:
        entries = [{"id": c.clip_id, "bin": [0, 16], "behavior": "straight"}
                   for c in clips]
    manifest = {"version": VERSION, "seed": seed, "clips": entries}
    manifest.update(extra or {})
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return Dataset(root=root, manifest=manifest)


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{root}: no manifest.json (dataset incomplete?)")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != VERSION:
        raise FormatError(f"{root}: unsupported dataset version")
    return Dataset(root=root, manifest=manifest)
