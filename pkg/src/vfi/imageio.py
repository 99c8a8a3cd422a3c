"""Frame I/O: binary netpbm (PGM/PPM, 8 or 16 bit) and PNG, plus triplet ingestion."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError, MissingFrameError, UnsupportedFormatError

EXTENSIONS = (".png", ".ppm", ".pgm")
FRAME_NAMES = ("im1", "im2", "im3")


@dataclass
class TripletSample:
    paths: tuple[Path, Path, Path]
    frames: tuple[np.ndarray, np.ndarray, np.ndarray]  # (3, H, W) in [0, 1]

    @property
    def first(self) -> np.ndarray:
        return self.frames[0]

    @property
    def middle(self) -> np.ndarray:
        return self.frames[1]

    @property
    def last(self) -> np.ndarray:
        return self.frames[2]


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        if buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif buf[pos : pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_netpbm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"{path}: only binary PGM/PPM (P5/P6) supported, got {magic!r}")
    try:
        w, pos = _read_token(buf, pos)
        h, pos = _read_token(buf, pos)
        maxval, pos = _read_token(buf, pos)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise UnsupportedFormatError(f"{path}: malformed netpbm header") from exc
    if not 0 < maxval < 65536:
        raise UnsupportedFormatError(f"{path}: maxval {maxval} out of range")
    pos += 1  # single whitespace byte before the raster
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=pos) if len(buf) - pos >= count * dtype.itemsize else None
    if raw is None:
        raise UnsupportedFormatError(f"{path}: truncated raster")
    img = raw.reshape(h, w, channels).transpose(2, 0, 1).astype(np.float64) / maxval
    return img


def write_netpbm(path, image: np.ndarray, bits: int = 8) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise UnsupportedFormatError(f"cannot write {c}-channel image as netpbm")
    maxval = 255 if bits == 8 else 65535
    dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
    raster = np.round(img * maxval).astype(dtype).transpose(1, 2, 0)
    magic = b"P6" if c == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)[None] / 65535.0
        elif mode in ("L", "RGB"):
            arr = np.asarray(im, dtype=np.float64) / 255.0
            arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
        elif mode in ("RGBA", "P", "LA"):
            arr = np.asarray(im.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
        else:
            raise UnsupportedFormatError(f"{path}: unsupported PNG mode {mode}")
    return arr


def write_png(path, image: np.ndarray) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    img = np.round(img * 255).astype(np.uint8)
    if img.ndim == 3 and img.shape[0] == 1:
        Image.fromarray(img[0], mode="L").save(path)
    else:
        Image.fromarray(img.transpose(1, 2, 0), mode="RGB").save(path)


def read_image(path) -> np.ndarray:
    """Decode to ``(3, H, W)`` float64 in [0, 1]; grey images are replicated to RGB."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext in (".ppm", ".pgm"):
        img = read_netpbm(path)
    elif ext == ".png":
        img = read_png(path)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported extension {ext!r}")
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    return img


def write_image(path, image: np.ndarray) -> None:
    """Encode by extension; values are clamped to [0, 1] here and nowhere else."""
    ext = Path(path).suffix.lower()
    if ext in (".ppm", ".pgm"):
        write_netpbm(path, image)
    elif ext == ".png":
        write_png(path, image)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported extension {ext!r}")


def ingest_triplet(directory) -> TripletSample:
    """Load ``im1/im2/im3`` sharing one raster extension from ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFrameError(f"{directory}: not a directory")
    found = {p.stem: p for p in directory.iterdir() if p.stem in FRAME_NAMES and p.is_file()}
    if not found:
        raise MissingFrameError(f"{directory}: no im1/im2/im3 frames")
    exts = {p.suffix.lower() for p in found.values()}
    bad = sorted(e for e in exts if e not in EXTENSIONS)
    if bad:
        raise UnsupportedFormatError(f"{directory}: unsupported frame format {bad[0]!r}")
    missing = [n for n in FRAME_NAMES if n not in found]
    if missing:
        raise MissingFrameError(f"{directory}: missing frame {missing[0]}")
    if len(exts) != 1:
        raise UnsupportedFormatError(f"{directory}: frames mix extensions {sorted(exts)}")
    paths = tuple(found[n] for n in FRAME_NAMES)
    frames = tuple(read_image(p) for p in paths)
    if len({f.shape for f in frames}) != 1:
        raise DimensionMismatchError(
            f"{directory}: frame sizes differ {[f.shape[1:] for f in frames]}"
        )
    return TripletSample(paths, frames)


def write_triplet(directory, frames, ext: str = ".ppm") -> TripletSample:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = tuple(directory / f"{n}{ext}" for n in FRAME_NAMES)
    for p, f in zip(paths, frames):
        write_image(p, f)
    return ingest_triplet(directory)
