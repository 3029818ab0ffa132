"""Periodic cubic grid with spectral differentiation.

Fields are plain ``numpy`` arrays of shape ``grid.shape``; batches of fields
(orbital families) carry extra leading axes. Every operation acts on the last
three axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import map_coordinates

from .errors import ConfigurationError, DimensionError

_WORKERS = None


def set_threads(n: int | None) -> None:
    """Thread count for the FFT kernels (results do not depend on it)."""
    global _WORKERS
    _WORKERS = n


def _fft_friendly(n: int) -> bool:
    if n % 2:
        return False
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid:
    n_per_axis: int
    box_length: float
    # physical position of the box center; coordinates span center + [-L/2, L/2)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        n = self.n_per_axis
        if not isinstance(n, (int, np.integer)) or n < 8 or not _fft_friendly(n):
            raise ConfigurationError(
                f"n_per_axis must be an even 5-smooth integer >= 8 (e.g. 32, 48, 64), got {n!r}")
        if not self.box_length > 0 or not np.isfinite(self.box_length):
            raise ConfigurationError(f"box_length must be positive, got {self.box_length!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @property
    def size(self) -> int:
        return self.n_per_axis**3

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def volume(self) -> float:
        return self.box_length**3

    @cached_property
    def axis(self) -> np.ndarray:
        """1-D node coordinates relative to the box center."""
        return (np.arange(self.n_per_axis) - self.n_per_axis // 2) * self.spacing

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable physical coordinates (x, y, z)."""
        a = self.axis
        cx, cy, cz = self.center
        return (a[:, None, None] + cx, a[None, :, None] + cy, a[None, None, :] + cz)

    @cached_property
    def laplacian_multipliers(self) -> np.ndarray:
        """|k|^2 on the half-spectrum layout used by ``rfftn``."""
        n = self.n_per_axis
        k = 2 * np.pi * np.fft.fftfreq(n, d=self.spacing)
        kr = 2 * np.pi * np.fft.rfftfreq(n, d=self.spacing)
        return k[:, None, None] ** 2 + k[None, :, None] ** 2 + kr[None, None, :] ** 2

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-3:] != self.shape:
            raise DimensionError(f"field shape {f.shape} does not match grid {self.shape}")
        return f

    def fft(self, f):
        return sfft.rfftn(f, axes=(-3, -2, -1), workers=_WORKERS)

    def ifft(self, fh):
        return sfft.irfftn(fh, s=self.shape, axes=(-3, -2, -1), workers=_WORKERS)

    def apply_fourier_multiplier(self, f: np.ndarray, mult: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(self.check(f)) * mult)

    def apply_laplacian(self, f: np.ndarray) -> np.ndarray:
        """-Delta f, spectrally."""
        return self.apply_fourier_multiplier(f, self.laplacian_multipliers)

    def inner_product(self, f: np.ndarray, g: np.ndarray) -> float | np.ndarray:
        f, g = self.check(f), self.check(g)
        if f.shape != g.shape:
            raise DimensionError(f"shape mismatch {f.shape} vs {g.shape}")
        return np.sum(f * g, axis=(-3, -2, -1)) * self.cell_volume

    def integrate(self, f: np.ndarray) -> float | np.ndarray:
        return np.sum(self.check(f), axis=(-3, -2, -1)) * self.cell_volume

    def norm(self, f: np.ndarray) -> float | np.ndarray:
        return np.sqrt(self.inner_product(f, f))

    def gram(self, orbitals: np.ndarray) -> np.ndarray:
        u = self.check(orbitals).reshape(len(orbitals), -1)
        return (u @ u.T) * self.cell_volume

    def kinetic(self, f: np.ndarray) -> float | np.ndarray:
        """<-Delta f, f> computed in Fourier space (Parseval)."""
        fh = self.fft(self.check(f))
        w = np.full(fh.shape[-1], 2.0)
        w[0] = 1.0
        if self.n_per_axis % 2 == 0:
            w[-1] = 1.0
        dens = np.abs(fh) ** 2 * self.laplacian_multipliers * w
        return np.sum(dens, axis=(-3, -2, -1)) * self.cell_volume / self.size

    def distance_to(self, point) -> np.ndarray:
        x, y, z = self.coords()
        return np.sqrt((x - point[0]) ** 2 + (y - point[1]) ** 2 + (z - point[2]) ** 2)

    def contains(self, point, margin: float = 0.0) -> bool:
        half = self.box_length / 2 - margin
        return all(abs(p - c) <= half for p, c in zip(point, self.center))

    def with_box(self, box_length: float, center=None) -> "Grid":
        return Grid(self.n_per_axis, box_length, self.center if center is None else tuple(center))


def resample(f: np.ndarray, src: Grid, dst: Grid, scale: float = 1.0,
             origin=(0.0, 0.0, 0.0), target=None, order: int = 1) -> np.ndarray:
    """g(x) = scale^{3/2} f(scale (x - target) + origin) for x on ``dst``.

    Trilinear (``order=1``) or spline interpolation on ``src``, wrapping periodically only across the
    last cell; sample points outside the source box read zero (no periodic
    images are pulled in when shrinking). ``target`` defaults to ``dst.center``. This realizes dilations, translations and the change of
    frame used by the blow-up rescaling.
    """
    f = src.check(f)
    target = dst.center if target is None else target
    x, y, z = dst.coords()
    h = src.spacing
    idx = []
    inside = np.ones(dst.shape, dtype=bool)
    half = src.box_length / 2
    for xi, t, o, c in zip((x, y, z), target, origin, src.center):
        p = scale * (xi - t) + o
        idx.append(np.broadcast_to((p - c) / h + src.n_per_axis // 2, dst.shape))
        inside &= np.broadcast_to(np.abs(p - c) <= half, dst.shape)
    coords = np.stack(idx)
    batch = f.shape[:-3]
    flat = f.reshape((-1,) + src.shape)
    out = np.empty((flat.shape[0],) + dst.shape)
    for i, fi in enumerate(flat):
        out[i] = map_coordinates(fi, coords, order=order, mode="grid-wrap")
    out[:, ~inside] = 0.0
    return scale**1.5 * out.reshape(batch + dst.shape)


def dilate(grid: Grid, f: np.ndarray, t: float, about=None) -> np.ndarray:
    """t^{3/2} f(t (x - about) + about), same grid; ``about`` defaults to the box center."""
    if t <= 0:
        raise ConfigurationError("dilation factor must be positive")
    about = grid.center if about is None else tuple(about)
    if t == 1.0:
        return grid.check(f).copy()
    return resample(f, grid, grid, scale=t, origin=about, target=about)


def make_grid(n_per_axis: int, box_length: float, center=(0.0, 0.0, 0.0)) -> Grid:
    return Grid(n_per_axis, float(box_length), tuple(center))
