"""Periodic 2D pseudo-spectral core.

Provides the rectangular periodic grid, real scalar fields sampled at the
collocation nodes, diagonal Fourier-multiplier operators, the
constant-coefficient implicit solve (I - theta*dt*G*L)^-1, and trapezoidal
(grid-sum) quadrature.  Everything downstream (models, time steppers,
diagnostics) is built on these few operations.

Transforms use the real-to-complex FFT internally; all public data is real
and conjugate symmetry holds by construction.  Fields are value-like: every
operation returns a new field and validates finiteness, so NaN/Inf surfaces
at the point where it is produced rather than ten steps later.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as _fft

from .errors import ConfigurationError, NonFiniteError, SymbolSignError, UsageError

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "OperatorSymbol",
    "make_grid",
    "apply_operator",
    "solve_implicit",
    "inner_product",
    "integrate",
    "l2_norm",
    "dealias_pass",
    "reset_solve_count",
    "solve_count",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid on [0, lx) x [0, ly).

    Wavenumber tables follow the usual FFT layout: kx[j] = 2*pi*wrap(j, nx)/lx
    where wrap maps the index to the signed integer frequency in
    [-nx/2, nx/2), so kx[0] = 0.  ``dealias`` enables 2/3-rule truncation of
    nonlinear terms in the steppers; it defaults to off because the benchmark
    setups use plain collocation.
    """

    lx: float
    ly: float
    nx: int
    ny: int
    dealias: bool = False

    def __post_init__(self) -> None:
        if self.nx < 4 or self.ny < 4 or self.nx % 2 or self.ny % 2:
            raise ConfigurationError(
                f"mode counts must be even and >= 4, got nx={self.nx}, ny={self.ny}"
            )
        if not (self.lx > 0 and self.ly > 0):
            raise ConfigurationError(
                f"domain lengths must be positive, got lx={self.lx}, ly={self.ly}"
            )
        object.__setattr__(self, "dx", self.lx / self.nx)
        object.__setattr__(self, "dy", self.ly / self.ny)
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.lx / self.nx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.ly / self.ny)
        ky_half = 2.0 * np.pi * np.fft.rfftfreq(self.ny, d=self.ly / self.ny)
        for name, arr in (("kx", kx), ("ky", ky), ("_ky_half", ky_half)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # squared-wavenumber meshes on the half spectrum, shape (nx, ny//2+1)
        object.__setattr__(self, "_kx2", (kx**2)[:, None])
        object.__setattr__(self, "_ky2", (ky_half**2)[None, :])
        kx_cut = (2.0 / 3.0) * np.abs(kx).max()
        ky_cut = (2.0 / 3.0) * np.abs(ky).max()
        mask = (np.abs(kx)[:, None] <= kx_cut) & (np.abs(ky_half)[None, :] <= ky_cut)
        object.__setattr__(self, "_dealias_mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny // 2 + 1)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Collocation coordinates X, Y with X varying along axis 0."""
        x = self.dx * np.arange(self.nx)
        y = self.dy * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")


def make_grid(lx: float, ly: float, nx: int, ny: int, dealias: bool = False) -> Grid2D:
    """Build a periodic grid; mode counts must be even and at least 4."""
    return Grid2D(float(lx), float(ly), int(nx), int(ny), bool(dealias))


def _check_same_grid(a: "ScalarField2D", b: "ScalarField2D") -> None:
    if a.grid != b.grid:
        raise UsageError(
            f"fields live on different grids: {a.grid.shape} on "
            f"[{a.grid.lx}, {a.grid.ly}] vs {b.grid.shape} on "
            f"[{b.grid.lx}, {b.grid.ly}]"
        )


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    """Real scalar field sampled on a Grid2D, values[i, j] at (x_i, y_j).

    Construction rejects non-finite values; arithmetic is only defined
    between fields on identical grids.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise UsageError(
                f"values shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.isfinite(vals).all():
            raise NonFiniteError("field values contain NaN or Inf")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "ScalarField2D":
        x, y = grid.coords()
        return cls(grid, np.asarray(fn(x, y), dtype=float))

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "ScalarField2D":
        return cls(grid, np.full(grid.shape, float(value)))

    def _binary(self, other, op) -> "ScalarField2D":
        if isinstance(other, ScalarField2D):
            _check_same_grid(self, other)
            return ScalarField2D(self.grid, op(self.values, other.values))
        return ScalarField2D(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return ScalarField2D(self.grid, float(other) - self.values)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, np.multiply)

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return ScalarField2D(self.grid, -self.values)

    def max_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(frozen=True)
class OperatorSymbol:
    """Diagonal Fourier multiplier s(kx^2, ky^2) with a required sign.

    ``sign`` is +1 for a nonnegative symbol (the energy operator L), -1 for
    a nonpositive one (the dissipation operator G), 0 for unconstrained.
    Multiplier tables are cached per grid; the cache is filled once and then
    only read, so concurrent use is safe.
    """

    name: str
    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sign: int = 0
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def table(self, grid: Grid2D) -> np.ndarray:
        key = (grid.nx, grid.ny, grid.lx, grid.ly)
        tab = self._tables.get(key)
        if tab is None:
            raw = np.asarray(self.eval(grid._kx2, grid._ky2), dtype=float)
            tab = np.ascontiguousarray(np.broadcast_to(raw, grid.spectral_shape))
            if not np.isfinite(tab).all():
                raise SymbolSignError(f"symbol '{self.name}' is non-finite on the grid")
            if self.sign > 0 and tab.min() < 0.0:
                raise SymbolSignError(
                    f"symbol '{self.name}' must be nonnegative, min={tab.min():.3e}"
                )
            if self.sign < 0 and tab.max() > 0.0:
                raise SymbolSignError(
                    f"symbol '{self.name}' must be nonpositive, max={tab.max():.3e}"
                )
            tab.setflags(write=False)
            self._tables[key] = tab
        return tab


# Per-thread counter of constant-coefficient implicit solves, used to verify
# the per-step solve budget of each scheme and to report iteration costs.
_counter = threading.local()


def reset_solve_count() -> None:
    _counter.n = 0


def solve_count() -> int:
    return getattr(_counter, "n", 0)


def forward(f: ScalarField2D) -> np.ndarray:
    """Real-to-complex transform of the field values."""
    return _fft.rfft2(f.values)


def inverse(grid: Grid2D, spec: np.ndarray) -> np.ndarray:
    """Complex-to-real inverse transform back to collocation values."""
    return _fft.irfft2(spec, s=grid.shape)


def apply_operator(f: ScalarField2D, s: OperatorSymbol) -> ScalarField2D:
    """Apply a diagonal Fourier multiplier: out_hat(k) = s(k) * f_hat(k)."""
    out = inverse(f.grid, s.table(f.grid) * forward(f))
    if not np.isfinite(out).all():
        raise NonFiniteError(f"applying symbol '{s.name}' produced non-finite values")
    return ScalarField2D(f.grid, out)


def solve_implicit(
    rhs: ScalarField2D,
    dt: float,
    theta: float,
    g: OperatorSymbol,
    l: OperatorSymbol,
) -> ScalarField2D:
    """Solve (I - theta*dt*G*L) u = rhs diagonally in Fourier space.

    theta = 1 is the backward-Euler weight, theta = 1/2 the Crank-Nicolson
    weight.  The per-mode multiplier 1 - theta*dt*g(k)*l(k) is at least 1
    whenever the symbols satisfy their sign constraints, making the solve
    unconditionally well posed.
    """
    if theta not in (1.0, 0.5):
        raise ConfigurationError(f"theta must be 1 or 1/2, got {theta}")
    if dt < 0:
        raise ConfigurationError(f"dt must be nonnegative, got {dt}")
    grid = rhs.grid
    mult = 1.0 - theta * dt * g.table(grid) * l.table(grid)
    if mult.min() <= 0.0:
        raise SymbolSignError(
            f"implicit multiplier for '{g.name}'*'{l.name}' reaches "
            f"{mult.min():.3e} <= 0; symbol signs violated"
        )
    out = inverse(grid, forward(rhs) / mult)
    _counter.n = getattr(_counter, "n", 0) + 1
    if not np.isfinite(out).all():
        raise NonFiniteError(
            f"implicit solve with '{g.name}', '{l.name}' produced non-finite values"
        )
    return ScalarField2D(grid, out)


def inner_product(f: ScalarField2D, g: ScalarField2D) -> float:
    """Discrete L2 inner product: sum f*g*dx*dy (trapezoid rule, periodic)."""
    _check_same_grid(f, g)
    return float(np.sum(f.values * g.values)) * f.grid.cell_area


def integrate(f: ScalarField2D) -> float:
    """Integral of f over the domain (grid-sum quadrature)."""
    return float(f.values.sum()) * f.grid.cell_area


def l2_norm(f: ScalarField2D) -> float:
    """Grid-quadrature L2 norm, sqrt((f, f))."""
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def dealias_pass(f: ScalarField2D) -> ScalarField2D:
    """Zero all modes beyond the 2/3 cutoff (used only when grid.dealias)."""
    return ScalarField2D(f.grid, inverse(f.grid, forward(f) * f.grid._dealias_mask))
