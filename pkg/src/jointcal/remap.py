"""Dense pixel mapping between two camera models and bilinear image warping.

For each target pixel ``u2`` the field stores the source pixel
``u1 = project(unproject(u2; target); source)``. A cell is valid when the
ray lies within the monotone radius of both models and ``u1`` can be
bilinearly sampled from the source image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, max_valid_radius, undistort_normalized
from .errors import DimensionMismatch, ParseError

MAGIC = b"RMAP"
_RECORD = np.dtype([("x", "<f4"), ("y", "<f4"), ("valid", "u1")])
# bilinear weights this close to 0 or 1 are snapped so exact maps copy pixels exactly
_SNAP = 1e-9
# source coordinates this far outside the image still count as on the border
_EDGE = 1e-6


@dataclass
class RemapField:
    width: int
    height: int
    map: np.ndarray  # (height, width, 2) source coordinates, pixels
    valid: np.ndarray  # (height, width) bool
    source_size: tuple[int, int] | None = None  # (width, height)

    def __post_init__(self):
        self.map = np.asarray(self.map, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.map.shape != (self.height, self.width, 2) or self.valid.shape != (self.height, self.width):
            raise DimensionMismatch("map/valid arrays do not match the field size")

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        rec = np.empty(self.width * self.height, dtype=_RECORD)
        m = np.where(self.valid[..., None], self.map, 0.0).reshape(-1, 2)
        rec["x"] = m[:, 0]
        rec["y"] = m[:, 1]
        rec["valid"] = self.valid.reshape(-1)
        return MAGIC + struct.pack("<II", self.width, self.height) + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RemapField":
        if data[:4] != MAGIC:
            raise ParseError("not a remap field (bad magic)")
        if len(data) < 12:
            raise ParseError("truncated remap header")
        w, h = struct.unpack("<II", data[4:12])
        body = data[12:]
        if len(body) != w * h * _RECORD.itemsize:
            raise ParseError(f"remap body has {len(body)} bytes, expected {w * h * _RECORD.itemsize}")
        rec = np.frombuffer(body, dtype=_RECORD)
        m = np.column_stack([rec["x"], rec["y"]]).astype(float).reshape(h, w, 2)
        return cls(w, h, m, rec["valid"].astype(bool).reshape(h, w))

    @classmethod
    def load(cls, path) -> "RemapField":
        return cls.from_bytes(Path(path).read_bytes())


def _normalized(x, y, K: CameraIntrinsics):
    k1, k2, k3, t1, t2 = K.distortion
    r2 = x * x + y * y
    f = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = x * f + 2.0 * t1 * x * y + t2 * (r2 + 2.0 * x * x)
    yd = y * f + 2.0 * t2 * x * y + t1 * (r2 + 2.0 * y * y)
    return xd, yd


def build_remap(source: CameraIntrinsics, target: CameraIntrinsics) -> RemapField:
    """Map every target pixel center to its source-image coordinate."""
    w, h = target.width, target.height
    vv, uu = np.mgrid[0:h, 0:w].astype(float)
    x, y, ok = undistort_normalized(((uu - target.cx) / target.fx).ravel(), ((vv - target.cy) / target.fy).ravel(),
                                    target.distortion)
    r = np.hypot(x, y)
    ok &= r <= max_valid_radius(source.distortion)
    xd, yd = _normalized(x, y, source)
    su = source.fx * xd + source.cx
    sv = source.fy * yd + source.cy
    with np.errstate(invalid="ignore"):
        ok &= np.isfinite(su) & np.isfinite(sv)
        ok &= (su >= -_EDGE) & (su <= source.width - 1.0 + _EDGE) & (sv >= -_EDGE) & (sv <= source.height - 1.0 + _EDGE)
    # round-off overshoot at the border is pulled back onto the image
    su = np.clip(su, 0.0, source.width - 1.0)
    sv = np.clip(sv, 0.0, source.height - 1.0)
    m = np.stack([np.where(ok, su, 0.0), np.where(ok, sv, 0.0)], axis=1).reshape(h, w, 2)
    return RemapField(w, h, m, ok.reshape(h, w), (source.width, source.height))


def warp_image(image, field: RemapField, fill=0):
    """Bilinearly sample ``image`` at the field's source coordinates.

    Accepts ``(H, W)`` or ``(H, W, C)`` arrays; integer images are rounded
    and clipped back to their dtype.
    """
    img = np.asarray(image)
    if img.ndim not in (2, 3):
        raise DimensionMismatch(f"expected a 2-D or 3-D image, got shape {img.shape}")
    if field.source_size is not None and (img.shape[1], img.shape[0]) != tuple(field.source_size):
        raise DimensionMismatch(f"image is {img.shape[1]}x{img.shape[0]}, field expects "
                                f"{field.source_size[0]}x{field.source_size[1]}")
    H, W = img.shape[:2]
    src = img.astype(float)
    if src.ndim == 2:
        src = src[..., None]
    valid = field.valid.copy()
    mx = field.map[..., 0]
    my = field.map[..., 1]
    valid &= (mx >= 0) & (mx <= W - 1) & (my >= 0) & (my <= H - 1)
    mx = np.where(valid, mx, 0.0)
    my = np.where(valid, my, 0.0)
    x0 = np.floor(mx)
    y0 = np.floor(my)
    fx = mx - x0
    fy = my - y0
    # snap near-integer coordinates
    up_x = fx > 1.0 - _SNAP
    up_y = fy > 1.0 - _SNAP
    x0 = np.where(up_x, x0 + 1, x0)
    y0 = np.where(up_y, y0 + 1, y0)
    fx = np.where(up_x | (fx < _SNAP), 0.0, fx)
    fy = np.where(up_y | (fy < _SNAP), 0.0, fy)
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = fx[..., None]
    fy = fy[..., None]
    top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    out = np.where(valid[..., None], out, float(fill))
    if img.ndim == 2:
        out = out[..., 0]
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(img.dtype)


def read_image(path) -> np.ndarray:
    """Load an 8-bit PNG or PGM as ``(H, W)`` or ``(H, W, 3)`` uint8."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return np.array(im, dtype=np.uint8)


def write_image(path, image) -> None:
    from PIL import Image

    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    fmt = "PPM" if str(path).lower().endswith((".pgm", ".ppm", ".pnm")) else None
    Image.fromarray(arr).save(path, format=fmt)
