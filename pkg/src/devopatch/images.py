"""Dense C×H×W images in [0, 1] and the lossless 8-bit codecs used at file
and wire boundaries."""

import io

import numpy as np
from PIL import Image as PILImage

from .errors import DimensionMismatch

# PIL mode per channel count for the PNG path; other counts go through npy.
_PIL_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


class Image:
    """Immutable C×H×W pixel tensor with intensities in [0, 1].

    8-bit integer data only appears at I/O boundaries; inside the package
    everything is normalized float. The backing array is read-only.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatch(f"expected a C×H×W array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionMismatch(f"every image dimension must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr.flags.writeable = False
        self.data = arr

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def quantize8(self) -> "Image":
        """Snap every intensity to the 8-bit grid (k/255, nearest k)."""
        return Image(np.round(self.data * 255.0) / 255.0)

    def to_uint8(self) -> np.ndarray:
        """C×H×W uint8 view of the image, rounding to nearest level."""
        return np.round(self.data * 255.0).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr) -> "Image":
        u8 = np.asarray(arr, dtype=np.uint8)
        return cls(u8.astype(np.float64) / 255.0)

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self):
        return f"Image(C={self.channels}, H={self.height}, W={self.width})"


def encode_png(image: Image) -> bytes:
    """Encode as PNG (lossless for 8-bit-grid intensities)."""
    mode = _PIL_MODES.get(image.channels)
    if mode is None:
        raise ValueError(f"PNG supports 1/3/4 channels, got {image.channels}; use npy")
    u8 = image.to_uint8()
    if image.channels == 1:
        pil = PILImage.fromarray(u8[0], mode="L")
    else:
        pil = PILImage.fromarray(np.moveaxis(u8, 0, 2), mode=mode)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> Image:
    """Decode PNG (or any Pillow-readable raster, e.g. binary PPM) bytes."""
    pil = PILImage.open(io.BytesIO(data))
    if pil.mode not in _PIL_MODES.values():
        pil = pil.convert("RGB")
    arr = np.asarray(pil, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[np.newaxis, :, :]
    else:
        arr = np.moveaxis(arr, 2, 0)
    return Image.from_uint8(arr)


def encode_npy(image: Image) -> bytes:
    """Raw-tensor wire encoding for channel counts PNG cannot carry."""
    buf = io.BytesIO()
    np.save(buf, image.data)
    return buf.getvalue()


def decode_npy(data: bytes) -> Image:
    arr = np.load(io.BytesIO(data), allow_pickle=False)
    return Image(arr)


def load_image(path) -> Image:
    """Read a PNG or binary PPM (P6) file into a normalized Image."""
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def save_png(image: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(image))
