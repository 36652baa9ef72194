"""Image containers, blur kernels, linear measurement operators, and metrics.

Images are flat float64 vectors with explicit 2D shape metadata so they
round-trip through files and solvers without ambiguity. All convolution is
circular (periodic boundary): that keeps every operator exactly linear, makes
the adjoint exact, and lets the FFT do the heavy lifting.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as _PilImage

from .errors import DimensionError, DomainError, ShapeMismatchError

__all__ = [
    "Image",
    "Kernel",
    "LinearOperator",
    "IdentityOperator",
    "ConvolutionOperator",
    "DenseOperator",
    "uniform_kernel",
    "gaussian_kernel",
    "make_kernel",
    "circular_convolve2d",
    "circular_correlate2d",
    "conv2d_forward",
    "conv2d_adjoint",
    "psnr",
    "load_image",
    "save_image",
]


@dataclass(frozen=True, eq=False)
class Image:
    """A grayscale image: flat intensity vector plus its 2D shape.

    Intensities are unitless on whatever scale the caller works in
    (typically [0, 1] for files, [0, peak] inside a photon-count
    experiment). Set ``nonneg=True`` to assert membership in the positive
    orthant, which the entropy-based geometries require.
    """

    data: np.ndarray
    width: int
    height: int
    nonneg: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).reshape(-1).copy()
        if self.width <= 0 or self.height <= 0:
            raise DimensionError("image dimensions must be positive")
        if arr.size != self.width * self.height:
            raise ShapeMismatchError(
                f"data has {arr.size} entries, expected "
                f"{self.width}x{self.height}={self.width * self.height}"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("image intensities must be finite")
        if self.nonneg and arr.min(initial=0.0) < 0.0:
            raise DomainError("image flagged nonnegative has negative entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_2d(cls, array, nonneg: bool = False) -> "Image":
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2D array, got ndim={arr.ndim}")
        h, w = arr.shape
        return cls(arr.reshape(-1), width=w, height=h, nonneg=nonneg)

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    def as_2d(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)


@dataclass(frozen=True, eq=False)
class Kernel:
    """A normalized 2D blur kernel with odd dimensions.

    Blur kernels sum to one so that convolving a constant image returns it
    unchanged and intensity is conserved.
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).copy()
        if taps.ndim != 2:
            raise DimensionError("kernel taps must form a 2D array")
        rows, cols = taps.shape
        if rows % 2 == 0 or cols % 2 == 0:
            raise DimensionError(f"kernel dimensions must be odd, got {rows}x{cols}")
        if not np.all(np.isfinite(taps)):
            raise DomainError("kernel taps must be finite")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ValueError(f"kernel taps must sum to 1, got {taps.sum()!r}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def shape(self) -> tuple:
        return self.taps.shape


def uniform_kernel(size: int = 9) -> Kernel:
    """Flat box kernel; every tap equals 1/size^2."""
    if size < 1 or size % 2 == 0:
        raise DimensionError("kernel size must be a positive odd integer")
    taps = np.full((size, size), 1.0 / (size * size))
    return Kernel(taps / taps.sum())


def gaussian_kernel(sigma: float, size: int = 9) -> Kernel:
    """Sampled isotropic Gaussian, renormalized to sum to one."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size < 1 or size % 2 == 0:
        raise DimensionError("kernel size must be a positive odd integer")
    offsets = np.arange(size) - size // 2
    yy, xx = np.meshgrid(offsets, offsets, indexing="ij")
    taps = np.exp(-(xx**2 + yy**2) / (2.0 * sigma * sigma))
    return Kernel(taps / taps.sum())


def make_kernel(spec: str) -> Kernel:
    """Build a kernel from a textual spec.

    Accepted forms: ``uniform9``, ``gauss9=SIGMA`` (alias ``gaussian9=``),
    and ``file:PATH`` where PATH is a whitespace text file of taps that get
    normalized on load.
    """
    spec = spec.strip()
    if spec == "uniform9":
        return uniform_kernel(9)
    for prefix in ("gauss9=", "gaussian9="):
        if spec.startswith(prefix):
            return gaussian_kernel(float(spec[len(prefix):]), 9)
    if spec.startswith("file:"):
        taps = np.loadtxt(spec[len("file:"):], ndmin=2, dtype=np.float64)
        total = taps.sum()
        if total <= 0:
            raise ValueError("kernel file taps must have a positive sum")
        return Kernel(taps / total)
    raise ValueError(f"unrecognized kernel spec {spec!r}")


def _check_kernel_fits(taps: np.ndarray, shape: tuple) -> None:
    if taps.shape[0] > shape[0] or taps.shape[1] > shape[1]:
        raise DimensionError(
            f"kernel {taps.shape} larger than image {tuple(shape)}"
        )


def _kernel_otf(taps: np.ndarray, shape: tuple) -> np.ndarray:
    """Real-FFT transfer function of a centered kernel embedded in `shape`."""
    pad = np.zeros(shape, dtype=np.float64)
    kh, kw = taps.shape
    pad[:kh, :kw] = taps
    pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.rfft2(pad)


def circular_convolve2d(x, taps) -> np.ndarray:
    """Circular 2D convolution of an image with a centered kernel."""
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    _check_kernel_fits(taps, x.shape)
    otf = _kernel_otf(taps, x.shape)
    return np.fft.irfft2(np.fft.rfft2(x) * otf, s=x.shape)


def circular_correlate2d(x, taps) -> np.ndarray:
    """Circular 2D correlation (convolution with the 180-degree flip)."""
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    _check_kernel_fits(taps, x.shape)
    otf = _kernel_otf(taps, x.shape)
    return np.fft.irfft2(np.fft.rfft2(x) * np.conj(otf), s=x.shape)


def conv2d_forward(image: Image, kernel: Kernel) -> Image:
    """Blur an image by circular convolution; output shape equals input."""
    return Image.from_2d(circular_convolve2d(image.as_2d(), kernel.taps))


def conv2d_adjoint(image: Image, kernel: Kernel) -> Image:
    """Adjoint of :func:`conv2d_forward`, i.e. circular correlation."""
    return Image.from_2d(circular_correlate2d(image.as_2d(), kernel.taps))


class LinearOperator(ABC):
    """A forward/adjoint pair satisfying <A x, u> = <x, A' u>."""

    in_shape: tuple
    out_shape: tuple

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        """Apply A."""

    @abstractmethod
    def adjoint(self, u: np.ndarray) -> np.ndarray:
        """Apply A'."""


class IdentityOperator(LinearOperator):
    def __init__(self, shape):
        self.in_shape = tuple(np.atleast_1d(shape))
        self.out_shape = self.in_shape

    def forward(self, x):
        return np.array(x, dtype=np.float64)

    def adjoint(self, u):
        return np.array(u, dtype=np.float64)


class ConvolutionOperator(LinearOperator):
    """Circular convolution with a fixed kernel on a fixed 2D grid.

    The transfer function is cached, so repeated applications inside an
    iterative solver cost two FFTs each.
    """

    def __init__(self, kernel: Kernel, shape):
        shape = tuple(shape)
        if len(shape) != 2:
            raise DimensionError("convolution operator needs a 2D shape")
        _check_kernel_fits(kernel.taps, shape)
        self.kernel = kernel
        self.in_shape = shape
        self.out_shape = shape
        self._otf = _kernel_otf(kernel.taps, shape)
        self._otf_conj = np.conj(self._otf)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.in_shape:
            raise ShapeMismatchError(f"expected {self.in_shape}, got {x.shape}")
        return np.fft.irfft2(np.fft.rfft2(x) * self._otf, s=self.in_shape)

    def adjoint(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != self.out_shape:
            raise ShapeMismatchError(f"expected {self.out_shape}, got {u.shape}")
        return np.fft.irfft2(np.fft.rfft2(u) * self._otf_conj, s=self.out_shape)


class DenseOperator(LinearOperator):
    """Explicit small matrix, for tests and non-convolutional toy problems."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise DimensionError("dense operator needs a 2D matrix")
        m, n = self.matrix.shape
        self.in_shape = (n,)
        self.out_shape = (m,)

    def forward(self, x):
        return self.matrix @ np.asarray(x, dtype=np.float64)

    def adjoint(self, u):
        return self.matrix.T @ np.asarray(u, dtype=np.float64)


def _intensities(x) -> np.ndarray:
    if isinstance(x, Image):
        return x.as_2d()
    return np.asarray(x, dtype=np.float64)


def psnr(reference, test, peak: float) -> float:
    """Peak signal-to-noise ratio in dB on the [0, peak] scale.

    Returns ``math.inf`` when the two inputs are identical (zero MSE).
    """
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    ref = _intensities(reference)
    tst = _intensities(test)
    if ref.shape != tst.shape:
        raise ShapeMismatchError(f"shape mismatch: {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


# ---------------------------------------------------------------------------
# File I/O: PGM (P2/P5) and 8/16-bit grayscale PNG. Files hold integers that
# map linearly onto [0, 1]; any rescaling to a photon peak happens upstream.
# ---------------------------------------------------------------------------


def _parse_pgm(raw: bytes):
    if raw[:2] not in (b"P2", b"P5"):
        raise ValueError("not a PGM file (expected P2 or P5 magic)")
    binary = raw[:2] == b"P5"
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(int(raw[start:pos]))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ValueError("PGM dimensions must be positive")
    if not 0 < maxval <= 65535:
        raise ValueError(f"PGM maxval out of range: {maxval}")
    count = width * height
    if binary:
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        values = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    else:
        text = raw[pos:].decode("ascii")
        tokens = []
        for line in text.splitlines():
            tokens.extend(line.split("#", 1)[0].split())
        if len(tokens) < count:
            raise ValueError("truncated PGM pixel data")
        values = np.array(tokens[:count], dtype=np.float64)
    data = values.astype(np.float64).reshape(height, width) / maxval
    return data


def _write_pgm(path: Path, values: np.ndarray, maxval: int) -> None:
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    path.write_bytes(header + values.astype(dtype).tobytes())


def load_image(path) -> Image:
    """Load a grayscale PGM or PNG file as an Image with values in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return Image.from_2d(_parse_pgm(path.read_bytes()), nonneg=True)
    if suffix == ".png":
        with _PilImage.open(path) as img:
            if img.mode not in ("L", "I", "I;16"):
                raise ValueError(
                    f"only grayscale PNGs are supported, got mode {img.mode!r}"
                )
            arr = np.asarray(img)
        scale = 255.0 if arr.dtype == np.uint8 else 65535.0
        return Image.from_2d(arr.astype(np.float64) / scale, nonneg=True)
    raise ValueError(f"unsupported image format {suffix!r} (use .pgm or .png)")


def save_image(image: Image, path, bits: int = 8) -> None:
    """Write an Image (values clipped to [0, 1]) as 8- or 16-bit PGM/PNG."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = Path(path)
    maxval = 255 if bits == 8 else 65535
    quantized = np.rint(np.clip(image.as_2d(), 0.0, 1.0) * maxval)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _write_pgm(path, quantized, maxval)
    elif suffix == ".png":
        if bits == 8:
            _PilImage.fromarray(quantized.astype(np.uint8), mode="L").save(path)
        else:
            pil = _PilImage.fromarray(quantized.astype("<u2"))
            pil.save(path)
    else:
        raise ValueError(f"unsupported image format {suffix!r} (use .pgm or .png)")
