"""Periodic Cartesian grids, radial grids, complex fields, spectral calculus, norms.

The periodic box [-L/2, L/2)^3 stands in for R^3.  All soliton profiles decay
exponentially, so with the default box L=32 the wrap-around tails sit at the
e^{-16} level; every consumer that needs tighter floors states its grid.

Conventions:
  * grid points      x_i = -L/2 + i*h,  h = L/n  (n a power of two)
  * wave numbers     k_m = (2*pi/L)*m,  m = -n/2 .. n/2-1  (fftfreq layout)
  * homogeneous |k|^s multipliers drop the k=0 mode (recorded in metadata)
  * radial grids are uniform and staggered: r_j = (j+1/2)*h_r, which avoids
    the coordinate singularity and admits parity-exact reflection at r=0.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


def _workers():
    # SOLITON_LAB_THREADS caps internal FFT parallelism (cli contract)
    try:
        return max(1, int(os.environ.get("SOLITON_LAB_THREADS", "0"))) or -1
    except ValueError:
        return -1


# ----------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class CartGrid:
    """Cubic periodic grid: n points per axis on a box of side `box_length`."""

    n: int
    box_length: float

    def __post_init__(self):
        if self.n <= 0 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a positive power of two, got {self.n}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_measure(self) -> float:
        return self.spacing**3

    @property
    def total_points(self) -> int:
        return self.n**3

    def axis(self) -> np.ndarray:
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    def coords(self):
        """Meshgrid (x, y, z), each shaped (n, n, n)."""
        a = self.axis()
        return np.meshgrid(a, a, a, indexing="ij")

    def radii(self) -> np.ndarray:
        x, y, z = self.coords()
        return np.sqrt(x * x + y * y + z * z)

    def k_axis(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    def k_coords(self):
        k = self.k_axis()
        return np.meshgrid(k, k, k, indexing="ij")

    def k2(self) -> np.ndarray:
        """|k|^2 on the fft-ordered lattice."""
        kx, ky, kz = self.k_coords()
        return kx * kx + ky * ky + kz * kz


@dataclass(frozen=True)
class RadialGrid:
    """Uniform staggered radial grid r_j = (j+1/2)h, j = 0..n_r-1, r_max = n_r*h."""

    n_r: int
    r_max: float

    def __post_init__(self):
        if self.n_r <= 0:
            raise ValueError("n_r must be positive")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")

    @property
    def h(self) -> float:
        return self.r_max / self.n_r

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.h

    def quad(self, fr: np.ndarray) -> float:
        """Midpoint quadrature of 4*pi*int f(r) r^2 dr (radial 3-D integral)."""
        r = self.nodes
        return float(4.0 * np.pi * np.sum(fr * r * r) * self.h)


# ----------------------------------------------------------------------------
# fields


@dataclass
class Field:
    """Complex scalar samples on a CartGrid."""

    grid: CartGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n,) * 3:
            raise ValueError(f"field shape {v.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(v.view(np.float64))):
            raise ValueError("field contains non-finite entries")
        self.values = v

    @classmethod
    def zeros(cls, grid: CartGrid) -> "Field":
        return cls(grid, np.zeros((grid.n,) * 3, dtype=np.complex128))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __add__(self, other):
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__


CONJ_TOL = 1e-12


@dataclass
class PairField:
    """Two-component column vector (upper, lower); lower = conj(upper) when the
    field represents a (f, conj f) pair, which is tracked by `conjugate_pair`."""

    grid: CartGrid
    upper: np.ndarray
    lower: np.ndarray
    conjugate_pair: bool = field(default=False)

    def __post_init__(self):
        self.upper = np.asarray(self.upper, dtype=np.complex128)
        self.lower = np.asarray(self.lower, dtype=np.complex128)
        shape = (self.grid.n,) * 3
        if self.upper.shape != shape or self.lower.shape != shape:
            raise ValueError("component shape does not match grid")
        if self.conjugate_pair:
            scale = max(1.0, float(np.max(np.abs(self.upper))))
            err = float(np.max(np.abs(self.lower - np.conj(self.upper))))
            if err > CONJ_TOL * scale:
                raise ValueError(f"claimed conjugate pair violated: max dev {err:.3e}")

    @classmethod
    def from_upper(cls, grid: CartGrid, upper: np.ndarray) -> "PairField":
        upper = np.asarray(upper, dtype=np.complex128)
        return cls(grid, upper, np.conj(upper), conjugate_pair=True)

    @classmethod
    def zeros(cls, grid: CartGrid) -> "PairField":
        z = np.zeros((grid.n,) * 3, dtype=np.complex128)
        return cls(grid, z, z.copy(), conjugate_pair=True)

    def copy(self) -> "PairField":
        return PairField(self.grid, self.upper.copy(), self.lower.copy(),
                         conjugate_pair=self.conjugate_pair)

    def __add__(self, other):
        return PairField(self.grid, self.upper + other.upper, self.lower + other.lower,
                         conjugate_pair=self.conjugate_pair and other.conjugate_pair)

    def __sub__(self, other):
        return PairField(self.grid, self.upper - other.upper, self.lower - other.lower,
                         conjugate_pair=self.conjugate_pair and other.conjugate_pair)

    def __mul__(self, c):
        keep = self.conjugate_pair and np.isrealobj(np.asarray(c)) and np.ndim(c) == 0
        return PairField(self.grid, self.upper * c, self.lower * c, conjugate_pair=bool(keep))

    __rmul__ = __mul__

    def conj_deviation(self) -> float:
        return float(np.max(np.abs(self.lower - np.conj(self.upper))))


def sigma3(F: PairField) -> PairField:
    return PairField(F.grid, F.upper.copy(), -F.lower, conjugate_pair=False)


def i_sigma3(F: PairField) -> PairField:
    """iσ₃F; maps conjugate pairs to conjugate pairs."""
    return PairField(F.grid, 1j * F.upper, -1j * F.lower, conjugate_pair=F.conjugate_pair)


def pair_conj(F: PairField) -> PairField:
    """Component swap (f,g) -> (conj g, conj f); sends F to its conjugate pair."""
    return PairField(F.grid, np.conj(F.lower), np.conj(F.upper),
                     conjugate_pair=F.conjugate_pair)


# ----------------------------------------------------------------------------
# inner products and quadrature


def integrate(grid: CartGrid, values: np.ndarray) -> complex:
    return complex(np.sum(values) * grid.cell_measure)


def l2_inner(f: Field, g: Field) -> complex:
    """int f conj(g) dx."""
    return complex(np.vdot(g.values, f.values) * f.grid.cell_measure)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_measure))


def pair_inner(F: PairField, G: PairField) -> complex:
    """<F,G> = int (F1 conj(G1) + F2 conj(G2)) dx.

    For conjugate pairs this reduces to the thesis pairing
    int (f conj g + conj f g) dx, which is real.
    """
    s = np.vdot(G.upper, F.upper) + np.vdot(G.lower, F.lower)
    return complex(s * F.grid.cell_measure)


def pair_norm(F: PairField) -> float:
    return float(np.sqrt(abs(pair_inner(F, F))))


# ----------------------------------------------------------------------------
# spectral calculus


def fftn(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values, workers=_workers())


def ifftn(values: np.ndarray) -> np.ndarray:
    return sfft.ifftn(values, workers=_workers())


def spectral_laplacian(f: Field, grid: CartGrid | None = None) -> Field:
    """Exact Laplacian of the trigonometric interpolant."""
    g = grid or f.grid
    return Field(g, ifftn(-g.k2() * fftn(f.values)))


def deriv_k_axis(grid: CartGrid) -> np.ndarray:
    """k axis for odd-order derivatives: the Nyquist mode is zeroed (it has
    no conjugate partner, so i*k on it breaks realness of real fields)."""
    k = grid.k_axis().copy()
    k[grid.n // 2] = 0.0
    return k


def spectral_gradient(f: Field) -> tuple[Field, Field, Field]:
    fh = fftn(f.values)
    k = deriv_k_axis(f.grid)
    kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
    return (Field(f.grid, ifftn(1j * kx * fh)),
            Field(f.grid, ifftn(1j * ky * fh)),
            Field(f.grid, ifftn(1j * kz * fh)))


def spectral_shift(f: Field, d) -> Field:
    """Translate samples by d (exact for the trigonometric interpolant)."""
    fh = fftn(f.values)
    kx, ky, kz = f.grid.k_coords()
    ph = np.exp(-1j * (kx * d[0] + ky * d[1] + kz * d[2]))
    return Field(f.grid, ifftn(ph * fh))


def fractional_derivative(f: Field, s: float) -> Field:
    """|∇|^s f via the |k|^s multiplier; the k=0 mode is dropped (s > 0)."""
    fh = fftn(f.values)
    k2 = f.grid.k2()
    mult = np.zeros_like(k2)
    np.power(k2, s / 2.0, out=mult, where=(k2 > 0))
    return Field(f.grid, ifftn(mult * fh))


_SOBOLEV_S = (0.0, 0.5, 1.0)


def sobolev_norm(f: Field, s: float, grid: CartGrid | None = None) -> float:
    """Homogeneous Sobolev norm || |∇|^s f ||_2 for s in {0, 1/2, 1}.

    Computed as a mode-space sum; for s=0 this is the L^2 norm (k=0 kept),
    for s>0 the k=0 mode is dropped.
    """
    if s not in _SOBOLEV_S:
        raise ValueError(f"s must be one of {_SOBOLEV_S}, got {s}")
    g = grid or f.grid
    fh = fftn(f.values) / g.n**3
    w = np.abs(fh) ** 2
    if s > 0:
        w = w * g.k2() ** s
        w.flat[0] = 0.0
    return float(np.sqrt(np.sum(w) * g.box_length**3))


def pair_sobolev_norm(F: PairField, s: float) -> float:
    nu = sobolev_norm(Field(F.grid, F.upper), s)
    nl = sobolev_norm(Field(F.grid, F.lower), s)
    return float(np.sqrt(nu * nu + nl * nl))


def lp_norm(f: Field, p: float) -> float:
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_measure) ** (1.0 / p))


# ----------------------------------------------------------------------------
# Lorentz norms via the discrete decreasing rearrangement


def decreasing_rearrangement(f: Field) -> tuple[np.ndarray, float]:
    """Sorted |f| values (descending, ties broken by flat grid index) and the
    cell measure.  The rearrangement f* is the right-continuous step function
    taking value vals[j] on [j*m0, (j+1)*m0)."""
    flat = np.abs(f.values).ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    return flat[order], f.grid.cell_measure


def lorentz_norm(f: Field, p: float, q: float) -> float:
    """Discrete L^{p,q} norm: the rearrangement integral of Appendix-A type,
    evaluated exactly on the step rearrangement (cell measure = spacing^3)."""
    if not (1 <= p < np.inf):
        raise ValueError(f"require 1 <= p < inf, got p={p}")
    if not (1 <= q):
        raise ValueError(f"require q >= 1, got q={q}")
    vals, m0 = decreasing_rearrangement(f)
    nz = vals > 0
    vals = vals[nz]
    if vals.size == 0:
        return 0.0
    t_hi = (np.arange(vals.size) + 1.0) * m0
    if np.isinf(q):
        return float(np.max(t_hi ** (1.0 / p) * vals))
    t_lo = t_hi - m0
    # int_{t_lo}^{t_hi} t^{q/p - 1} dt = (p/q) (t_hi^{q/p} - t_lo^{q/p}), exact per step
    a = q / p
    chunks = (t_hi**a - t_lo**a) * vals**q
    return float((np.sum(chunks) * p / q) ** (1.0 / q))


# ----------------------------------------------------------------------------
# serialization: flat binary container and CSV slices

_MAGIC = b"SLFLD001"


def write_field(path, f: Field) -> None:
    """Flat binary: magic, dims (3 x int64), box_length (f64), then
    little-endian float64 interleaved re/im in C order."""
    v = np.ascontiguousarray(f.values)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3q", *v.shape))
        fh.write(struct.pack("<d", f.grid.box_length))
        inter = np.empty(v.size * 2, dtype="<f8")
        inter[0::2] = v.real.ravel()
        inter[1::2] = v.imag.ravel()
        fh.write(inter.tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a field container (magic {magic!r})")
        dims = struct.unpack("<3q", fh.read(24))
        (box_length,) = struct.unpack("<d", fh.read(8))
        count = dims[0] * dims[1] * dims[2] * 2
        inter = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
    vals = (inter[0::2] + 1j * inter[1::2]).reshape(dims)
    if dims[0] != dims[1] or dims[1] != dims[2]:
        raise ValueError("non-cubic container")
    return Field(CartGrid(dims[0], box_length), vals)


def write_axis_slice_csv(path, f: Field, axis: int = 0) -> None:
    """1-D slice through the box center along `axis`, as (coord, re, im) CSV."""
    n = f.grid.n
    idx = [n // 2] * 3
    sl = [slice(c, c + 1) for c in idx]
    sl[axis] = slice(None)
    line = f.values[tuple(sl)].ravel()
    xs = f.grid.axis()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coord", "re", "im"])
        for x, v in zip(xs, line):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
