"""Toy image sources, the flat raw-RGB file format, and PSNR."""
import struct
from pathlib import Path

import numpy as np

PSNR_CAP_DB = 99.0
MAX_PIXEL = 255.0


def textures(n, rng, c=3, h=16, w=16):
    """Procedural colour textures in [0, 1]: oriented gratings plus soft blobs."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    out = np.empty((n, c, h, w))
    for i in range(n):
        base = rng.uniform(0.2, 0.8, c)[:, None, None]
        img = np.broadcast_to(base, (c, h, w)).copy()
        for _ in range(rng.integers(1, 4)):
            f = rng.uniform(1, 4)
            ang = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * f * (xx * np.cos(ang) + yy * np.sin(ang)) + phase)
            img += rng.uniform(0.05, 0.25, c)[:, None, None] * wave
        for _ in range(rng.integers(0, 3)):
            cy, cx = rng.uniform(0, 1, 2)
            r = rng.uniform(0.1, 0.3)
            blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
            img += rng.uniform(-0.3, 0.3, c)[:, None, None] * blob
        out[i] = np.clip(img, 0.0, 1.0)
    return out


def write_raw_image(path, img):
    """Write a (3, H, W) array in [0, 1] as ``<u32 width><u32 height>`` + interleaved RGB bytes."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    pixels = np.clip(np.rint(img * MAX_PIXEL), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Path(path).write_bytes(struct.pack("<II", w, h) + pixels.tobytes())


def read_raw_image(path):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: too short for a raw image header")
    w, h = struct.unpack("<II", data[:8])
    if len(data) != 8 + 3 * w * h:
        raise ValueError(f"{path}: expected {3 * w * h} pixel bytes for {w}x{h}, got {len(data) - 8}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(float) / MAX_PIXEL


def load_image_dir(path, pattern="*.rgb"):
    files = sorted(Path(path).glob(pattern))
    if not files:
        raise FileNotFoundError(f"no {pattern} files in {path}")
    imgs = [read_raw_image(f) for f in files]
    if len({im.shape for im in imgs}) != 1:
        raise ValueError("all images in a directory must share one size")
    return np.stack(imgs)


def psnr(s, s_hat):
    """PSNR in dB on the 0-255 scale; ``inf`` for identical images.

    Leading axes are treated as a batch: one value per image.
    """
    s, s_hat = np.asarray(s, dtype=float), np.asarray(s_hat, dtype=float)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {s_hat.shape}")
    axes = tuple(range(max(s.ndim - 3, 0), s.ndim))
    mse = np.mean(((s - s_hat) * MAX_PIXEL) ** 2, axis=axes)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(MAX_PIXEL**2 / mse)


def psnr_report(value):
    """PSNR clipped to a finite value for tables and CSV rows."""
    return float(np.minimum(value, PSNR_CAP_DB))
