"""Grids, finite-difference Dirac/Laplace operators, noncommutative line
integrals, and Sobolev norms.

Conventions used throughout:

* A spatial grid covers a closed box V in R^n with uniform per-axis spacing.
  Fields are sampled on nodes and stored dense, C-contiguous.
* Field arity is one of "x" (functions on V), "xy" (functions on V x V,
  x-axes first, then y-axes), "txy" (a leading time axis over [0, T]).
* Scalar fields are complex128.  Algebra-valued fields carry a trailing
  coefficient axis of length 2^level with complex128 entries; since the
  central imaginary unit of the complexified algebra commutes with every
  basis generator, complex coefficients on the real basis i_0..i_{2^r-1}
  represent the complexification faithfully.
* Derivative stencils are 4th-order central in the interior and 2nd-order
  one-sided in the two cells nearest each boundary.  Composed operators
  therefore pollute a collar whose width is 2 cells per derivative
  application; refinement studies must exclude that collar (the reach is
  exposed so callers do not have to guess).
* 1-D quadrature is the interval-local cubic interpolatory rule: the
  increment over [x_k, x_{k+1}] is h(-f_{k-1} + 13 f_k + 13 f_{k+1} -
  f_{k+2})/24 in the interior and h(9 f_0 + 19 f_1 - 5 f_2 + f_3)/24 at the
  ends (mirrored).  Each increment is exact for cubics, so the composite
  rule is 4th order, and integrals are exactly additive under splitting a
  path at any node, which plain composite Simpson is not.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from cdburgers.algebra import (
    CdElement,
    ComplexCdElement,
    MAX_LEVEL,
    _mul_tables,
)

ARITIES = ("x", "xy", "txy")


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular lattice on a closed box, with an optional time
    axis [0, t_max] used by arity-"txy" fields."""

    bounds: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    t_max: float | None = None
    t_count: int | None = None

    def __post_init__(self):
        if len(self.bounds) != len(self.counts):
            raise ValueError("bounds/counts length mismatch")
        for (lo, hi), m in zip(self.bounds, self.counts):
            if not hi > lo:
                raise ValueError("degenerate axis bounds")
            if m < 2:
                raise ValueError("need at least 2 nodes per axis")
        if (self.t_max is None) != (self.t_count is None):
            raise ValueError("time axis needs both t_max and t_count")
        if self.t_count is not None and (self.t_count < 2 or self.t_max <= 0):
            raise ValueError("bad time axis")

    @classmethod
    def box(cls, n, lo, hi, count, t_max=None, t_count=None) -> "Grid":
        return cls(((lo, hi),) * n, (count,) * n, t_max, t_count)

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (m - 1) for (lo, hi), m in zip(self.bounds, self.counts)
        )

    @property
    def tau(self) -> float:
        if self.t_count is None:
            raise ValueError("grid has no time axis")
        return self.t_max / (self.t_count - 1)

    def axis(self, a: int) -> np.ndarray:
        lo, hi = self.bounds[a]
        return np.linspace(lo, hi, self.counts[a])

    def t_axis(self) -> np.ndarray:
        if self.t_count is None:
            raise ValueError("grid has no time axis")
        return np.linspace(0.0, self.t_max, self.t_count)

    def shape(self, arity: str, level: int | None = None) -> tuple[int, ...]:
        if arity == "x":
            s = self.counts
        elif arity == "xy":
            s = self.counts + self.counts
        elif arity == "txy":
            if self.t_count is None:
                raise ValueError("txy field on a grid without time axis")
            s = (self.t_count,) + self.counts + self.counts
        else:
            raise ValueError(f"unknown arity {arity!r}")
        if level is not None:
            s = s + (1 << level,)
        return s

    def node_index(self, point: Sequence[float]) -> tuple[int, ...]:
        """Indices of a point that must lie on the lattice (1e-9 h snap)."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n,):
            raise ValueError("point dimension mismatch")
        out = []
        for a, (x, (lo, hi), m) in enumerate(
            zip(point, self.bounds, self.counts)
        ):
            if x < lo - 1e-12 or x > hi + 1e-12:
                raise ValueError(f"point outside box on axis {a}")
            h = (hi - lo) / (m - 1)
            k = round((x - lo) / h)
            if abs(lo + k * h - x) > 1e-9 * h:
                raise ValueError(f"point not on a grid node along axis {a}")
            out.append(int(min(max(k, 0), m - 1)))
        return tuple(out)


class GridField:
    """Dense samples of a scalar- or algebra-valued function on a Grid."""

    __slots__ = ("grid", "arity", "level", "values")

    def __init__(self, grid: Grid, arity: str, values: np.ndarray,
                 level: int | None = None):
        if arity not in ARITIES:
            raise ValueError(f"unknown arity {arity!r}")
        values = np.ascontiguousarray(values, dtype=np.complex128)
        if values.shape != grid.shape(arity, level):
            raise ValueError(
                f"value shape {values.shape} does not match grid shape "
                f"{grid.shape(arity, level)}"
            )
        self.grid = grid
        self.arity = arity
        self.level = level  # None -> complex scalar field
        self.values = values

    @property
    def is_algebra_valued(self) -> bool:
        return self.level is not None

    @classmethod
    def zeros(cls, grid, arity, level=None) -> "GridField":
        return cls(grid, arity, np.zeros(grid.shape(arity, level)), level)

    @classmethod
    def from_function(cls, grid: Grid, arity: str,
                      fn: Callable[..., complex]) -> "GridField":
        """Sample fn on the open-meshgrid coordinates of the chosen arity.

        fn receives broadcastable coordinate arrays: (x1..xn) for "x",
        (x1..xn, y1..yn) for "xy", (t, x.., y..) for "txy".
        """
        axes = [grid.axis(a) for a in range(grid.n)]
        if arity == "x":
            coords = np.ix_(*axes)
        elif arity == "xy":
            coords = np.ix_(*axes, *axes)
        elif arity == "txy":
            coords = np.ix_(grid.t_axis(), *axes, *axes)
        else:
            raise ValueError(f"unknown arity {arity!r}")
        vals = np.asarray(fn(*coords), dtype=np.complex128)
        return cls(grid, arity, np.broadcast_to(vals, grid.shape(arity)).copy())

    def copy(self) -> "GridField":
        return GridField(self.grid, self.arity, self.values.copy(), self.level)

    def scalar_part(self) -> "GridField":
        """The i_0 component of an algebra-valued field (identity on
        scalar fields)."""
        if not self.is_algebra_valued:
            return self
        return GridField(self.grid, self.arity, self.values[..., 0])

    def component(self, j: int) -> "GridField":
        if not self.is_algebra_valued:
            raise ValueError("scalar field has no basis components")
        return GridField(self.grid, self.arity, self.values[..., j])

    def as_algebra(self, level: int) -> "GridField":
        """View a scalar field as algebra-valued (coefficient on i_0)."""
        if self.is_algebra_valued:
            if self.level != level:
                raise ValueError("level mismatch")
            return self
        vals = np.zeros(self.values.shape + (1 << level,), dtype=np.complex128)
        vals[..., 0] = self.values
        return GridField(self.grid, self.arity, vals, level)

    def _spatial_axes(self, slot: str) -> tuple[int, ...]:
        """Array axes addressed by derivative slot "x" or "y"."""
        n = self.grid.n
        off = 1 if self.arity == "txy" else 0
        if slot == "x":
            return tuple(range(off, off + n))
        if slot == "y":
            if self.arity == "x":
                raise ValueError('arity-"x" field has no y slot')
            return tuple(range(off + n, off + 2 * n))
        if slot == "t":
            if self.arity != "txy":
                raise ValueError("field has no time axis")
            return (0,)
        raise ValueError(f"unknown slot {slot!r}")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# finite-difference stencils
# ---------------------------------------------------------------------------

BOUNDARY_REACH_PER_DERIVATIVE = 2


def _moved(values: np.ndarray, axis: int):
    return np.moveaxis(values, axis, 0)


def diff_axis(values: np.ndarray, axis: int, h: float, order: int = 1
              ) -> np.ndarray:
    """Finite-difference derivative along one array axis.

    order 1 and 2 use dedicated stencils (4th-order central interior,
    2nd-order one-sided in the outermost two cells); higher orders compose
    the first-derivative operator.
    """
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    if order == 1:
        return _d1(values, axis, h)
    if order == 2:
        return _d2(values, axis, h)
    out = _d1(values, axis, h)
    for _ in range(order - 2):
        out = _d1(out, axis, h)
    return _d1(out, axis, h)


def _d1(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = _moved(values, axis)
    m = f.shape[0]
    if m < 5:
        raise ValueError("grid too coarse for the 4th-order stencil")
    out = np.empty_like(f)
    out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    out[1] = (f[2] - f[0]) / (2 * h)
    out[-2] = (f[-1] - f[-3]) / (2 * h)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _d2(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = _moved(values, axis)
    m = f.shape[0]
    if m < 5:
        raise ValueError("grid too coarse for the 4th-order stencil")
    out = np.empty_like(f)
    out[2:-2] = (
        -f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]
    ) / (12 * h * h)
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / (h * h)
    out[1] = (f[0] - 2 * f[1] + f[2]) / (h * h)
    out[-2] = (f[-3] - 2 * f[-2] + f[-1]) / (h * h)
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def interior_slices(shape: tuple[int, ...], axes: Sequence[int],
                    collar: int) -> tuple[slice, ...]:
    """Slices that drop `collar` cells from both ends of the given axes."""
    sl = [slice(None)] * len(shape)
    for a in axes:
        if 2 * collar >= shape[a]:
            raise ValueError("collar swallows the whole axis")
        sl[a] = slice(collar, shape[a] - collar)
    return tuple(sl)


# ---------------------------------------------------------------------------
# Dirac-type operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiracSpec:
    """Weights psi_j and coordinate map xi for sigma f = sum_j i_j^*
    (d f / d x_{xi(j)}) psi_j.

    weights has length 2^level; xi maps basis index j to the 1-based
    coordinate whose derivative it carries (identity by default, meaning
    basis j differentiates coordinate j).  Entries with zero weight take no
    part.
    """

    level: int
    weights: tuple[float, ...]
    xi: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not 0 <= self.level <= MAX_LEVEL:
            raise ValueError("bad level")
        if len(self.weights) != 1 << self.level:
            raise ValueError("weights length must be 2^level")
        if not any(w != 0.0 for w in self.weights):
            raise ValueError("need at least one nonzero weight")
        if self.xi is None:
            object.__setattr__(
                self, "xi", tuple(range(1 << self.level))
            )
        if len(self.xi) != 1 << self.level:
            raise ValueError("xi length must be 2^level")

    @classmethod
    def standard(cls, n: int, level: int | None = None,
                 weight: float = 2 ** -0.5) -> "DiracSpec":
        """psi_j = weight for j = 1..n, zero otherwise, identity xi."""
        if level is None:
            level = max(2, n.bit_length())
        w = [0.0] * (1 << level)
        for j in range(1, n + 1):
            w[j] = weight
        return cls(level, tuple(w))

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(j for j, w in enumerate(self.weights) if w != 0.0)

    @property
    def n_active(self) -> int:
        return len(self.active)

    def axis_for_basis(self, j: int, n: int) -> int:
        """0-based grid axis differentiated by basis slot j."""
        coord = self.xi[j]
        if not 1 <= coord <= n:
            raise ValueError(
                f"xi({j}) = {coord} is not a coordinate of R^{n}"
            )
        return coord - 1

    def basis_for_axis(self, axis: int, n: int) -> int:
        """The active basis slot carrying grid axis `axis` (0-based)."""
        hits = [j for j in self.active if self.axis_for_basis(j, n) == axis]
        if len(hits) != 1:
            raise ValueError(
                f"axis {axis} must have exactly one active weight, "
                f"found {len(hits)}"
            )
        return hits[0]


def _left_basis_mul_field(j: int, values: np.ndarray, level: int,
                          conjugate: bool) -> np.ndarray:
    """i_j * v (or i_j^* v) on a trailing-coefficient-axis array."""
    idx, sgn = _mul_tables(level)
    out = np.empty_like(values)
    s = sgn[j, :].astype(np.float64)
    if conjugate and j != 0:
        s = -s
    out[..., idx[j, :]] = values * s
    return out


def dirac_apply(f: GridField, spec: DiracSpec, slot: str = "x") -> GridField:
    """sigma f = sum_j i_j^* (df/dx_{xi(j)}) psi_j on the chosen point slot.

    Always returns an algebra-valued field at spec.level (scalar input is
    promoted to its i_0 component first).
    """
    axes = f._spatial_axes(slot)
    g = f.as_algebra(spec.level) if not f.is_algebra_valued else f
    if g.level != spec.level:
        raise ValueError("field level does not match DiracSpec level")
    h = f.grid.spacings
    out = np.zeros_like(g.values)
    for j in spec.active:
        a = spec.axis_for_basis(j, f.grid.n)
        d = diff_axis(g.values, axes[a], h[a]) * spec.weights[j]
        out += _left_basis_mul_field(j, d, spec.level, conjugate=True)
    return GridField(f.grid, f.arity, out, spec.level)


def laplace_apply(f: GridField, slot: str = "x") -> GridField:
    """Sum of second derivatives over the axes of the chosen slot."""
    axes = f._spatial_axes(slot)
    h = f.grid.spacings
    out = np.zeros_like(f.values)
    for a, ax in enumerate(axes):
        out += diff_axis(f.values, ax, h[a], order=2)
    return GridField(f.grid, f.arity, out, f.level)


# ---------------------------------------------------------------------------
# additive 4th-order quadrature and line integrals
# ---------------------------------------------------------------------------


def interval_increments(values: np.ndarray, h: float, axis: int = 0
                        ) -> np.ndarray:
    """Per-interval integral increments along an axis (additive 4th-order
    interpolatory rule; see module docstring)."""
    f = _moved(values, axis)
    m = f.shape[0]
    if m < 2:
        raise ValueError("need at least 2 nodes to integrate")
    inc = np.empty((m - 1,) + f.shape[1:], dtype=np.complex128)
    if m == 2:
        inc[0] = 0.5 * h * (f[0] + f[1])
    elif m == 3:
        inc[0] = h * (5 * f[0] + 8 * f[1] - f[2]) / 12
        inc[1] = h * (-f[0] + 8 * f[1] + 5 * f[2]) / 12
    else:
        inc[0] = h * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3]) / 24
        inc[1:-1] = h * (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:]) / 24
        inc[-1] = h * (9 * f[-1] + 19 * f[-2] - 5 * f[-3] + f[-4]) / 24
    return np.moveaxis(inc, 0, axis)


def segment_integral(values: np.ndarray, h: float, i0: int, i1: int,
                     axis: int = 0) -> np.ndarray:
    """Integral from node i0 to node i1 along an axis (signed, additive)."""
    if i0 == i1:
        f = _moved(values, axis)
        return np.zeros(f.shape[1:], dtype=np.complex128)
    inc = _moved(interval_increments(values, h, axis), axis)
    lo, hi = (i0, i1) if i0 < i1 else (i1, i0)
    total = inc[lo:hi].sum(axis=0)
    return total if i0 < i1 else -total


def cumulative_integral(values: np.ndarray, h: float, axis: int = 0
                        ) -> np.ndarray:
    """Prefix integrals from node 0 to every node (same rule, vectorized)."""
    inc = interval_increments(values, h, axis)
    inc = _moved(inc, axis)
    out = np.zeros((inc.shape[0] + 1,) + inc.shape[1:], dtype=np.complex128)
    np.cumsum(inc, axis=0, out=out[1:])
    return np.moveaxis(out, 0, axis)


def quad_weights(m: int, h: float) -> np.ndarray:
    """Node weights of the additive rule for a full-axis integral."""
    w = np.zeros(m)
    if m < 2:
        raise ValueError("need at least 2 nodes to integrate")
    if m == 2:
        w[:] = 0.5 * h
    elif m == 3:
        w[:] = h * np.array([4, 16, 4]) / 12
    else:
        w[0:4] += h * np.array([9, 19, -5, 1]) / 24
        w[-4:] += h * np.array([1, -5, 19, 9]) / 24
        interior = np.array([-1, 13, 13, -1]) * h / 24
        for k in range(1, m - 2):
            w[k - 1: k + 3] += interior
    return w


@dataclass
class TailReport:
    """Certificate attached to a truncated ray integral."""

    r_covered: float
    decay_rate: float
    certificate_c: float
    bound: float


class PathError(ValueError):
    pass


def _segment_factor(spec: DiracSpec, axis: int, n: int) -> tuple[int, float]:
    """(basis index, psi^-1 N^-1 scale) for a segment along a grid axis."""
    j = spec.basis_for_axis(axis, n)
    scale = 1.0 / (spec.weights[j] * spec.n_active)
    return j, scale


def _as_element(coeffs: np.ndarray, level: int) -> ComplexCdElement:
    return ComplexCdElement(
        CdElement(level, coeffs.real.copy()),
        CdElement(level, coeffs.imag.copy()),
    )


def line_integral(f: GridField, w0: Sequence[float], x: Sequence[float],
                  spec: DiracSpec) -> ComplexCdElement:
    """Noncommutative line integral along the ascending-axis polyline from
    w0 to x.

    The segment along grid axis a contributes i_b psi_b^-1 N^-1 * (1-D
    integral of f over the segment), with b the active basis slot mapped to
    that axis and N the number of active slots, accumulated by left
    multiplication.  Both endpoints must be lattice nodes; traversing an
    axis with no active weight raises PathError.
    """
    if f.arity != "x":
        raise ValueError("line_integral expects a field over V")
    grid = f.grid
    i_from = list(grid.node_index(w0))
    i_to = grid.node_index(x)
    level = spec.level
    vals = f.values if f.is_algebra_valued else f.as_algebra(level).values
    if f.is_algebra_valued and f.level != level:
        raise ValueError("field level does not match DiracSpec level")
    total = np.zeros(1 << level, dtype=np.complex128)
    for a in range(grid.n):
        if i_from[a] == i_to[a]:
            continue
        try:
            j, scale = _segment_factor(spec, a, grid.n)
        except ValueError as e:
            raise PathError(f"zero-weight axis {a} traversed") from e
        sl = tuple(
            slice(None) if b == a else i_to[b] if b < a else i_from[b]
            for b in range(grid.n)
        )
        line = vals[sl]  # shape (m_a, 2^level)
        seg = segment_integral(line, grid.spacings[a], i_from[a], i_to[a])
        total += _left_basis_mul_field(
            j, seg * scale, level, conjugate=False
        )
        i_from[a] = i_to[a]
    return _as_element(total, level)


def tail_integral(f: GridField, w: Sequence[float], axis: int,
                  spec: DiracSpec, decay_rate: float,
                  r_inf: float | None = None
                  ) -> tuple[ComplexCdElement, TailReport]:
    """Ray integral from w toward +infinity along a grid axis, truncated at
    the box edge (or earlier at radius r_inf), with an exponential-tail
    error certificate.

    The certificate constant C is measured from the samples as
    max |f(w + s e_axis)| exp(decay_rate * s); the reported bound is
    C exp(-decay_rate * r_covered)/decay_rate, scaled by the same
    psi^-1 N^-1 normalization as the returned value.
    """
    if f.arity != "x":
        raise ValueError("tail_integral expects a field over V")
    if decay_rate <= 0:
        raise ValueError("decay rate must be positive to certify the tail")
    grid = f.grid
    i_w = grid.node_index(w)
    h = grid.spacings[axis]
    lo, hi = grid.bounds[axis]
    start = i_w[axis]
    stop = grid.counts[axis] - 1
    if r_inf is not None:
        stop = min(stop, start + int(np.floor(r_inf / h + 1e-9)))
    if stop <= start:
        raise ValueError("empty ray: w sits on the outgoing box edge")
    j, scale = _segment_factor(spec, axis, grid.n)
    level = spec.level
    vals = f.values if f.is_algebra_valued else f.as_algebra(level).values
    sl = tuple(
        slice(start, stop + 1) if b == axis else i_w[b]
        for b in range(grid.n)
    )
    line = vals[sl]
    seg = segment_integral(line, h, 0, stop - start)
    value = _as_element(
        _left_basis_mul_field(j, seg * scale, level, conjugate=False), level
    )
    s = h * np.arange(stop - start + 1)
    amps = np.sqrt((np.abs(line) ** 2).sum(axis=-1))
    cert = float(np.max(amps * np.exp(decay_rate * s)))
    r_cov = float(s[-1])
    bound = abs(scale) * cert * np.exp(-decay_rate * r_cov) / decay_rate
    return value, TailReport(r_cov, decay_rate, cert, bound)


# ---------------------------------------------------------------------------
# Sobolev norm
# ---------------------------------------------------------------------------


def _axis_weights(grid: Grid, arity: str) -> list[np.ndarray]:
    ws = []
    if arity == "txy":
        ws.append(quad_weights(grid.t_count, grid.tau))
    reps = 2 if arity in ("xy", "txy") else 1
    for _ in range(reps):
        for a in range(grid.n):
            ws.append(quad_weights(grid.counts[a], grid.spacings[a]))
    return ws


def _box_integral(values: np.ndarray, weights: list[np.ndarray]) -> float:
    out = values
    for w in reversed(weights):
        out = np.tensordot(out, w, axes=([out.ndim - 1], [0]))
    return float(out.real)


def sobolev_norm(f: GridField, m: int, k: int, s: float = 2.0) -> float:
    """Discrete W_{s,m,k} norm of a field on [0,T] x V x V:

        ( sum_{m0 <= m} sum_{m1+m2 <= k} sum_{j,k axes}
            Int |d^{m0+m1+m2} f / dt^{m0} dx_j^{m1} dy_k^{m2}|^s )^{1/s}

    The axis sums run over x-axes j for m1 > 0 and y-axes k for m2 > 0;
    terms with a zero order contribute once (no axis sum for that slot).
    Derivatives of order >= 3 compose the first-derivative stencil.
    """
    if f.arity != "txy":
        raise ValueError("sobolev_norm expects a (t, x, y) field")
    if f.is_algebra_valued:
        raise ValueError("sobolev_norm expects a scalar field")
    if s <= 0:
        raise ValueError("exponent must be positive")
    grid = f.grid
    n = grid.n
    weights = _axis_weights(grid, "txy")
    x_axes = f._spatial_axes("x")
    y_axes = f._spatial_axes("y")
    total = 0.0
    for m0 in range(m + 1):
        base = f.values
        for _ in range(m0):
            base = diff_axis(base, 0, grid.tau)
        for m1 in range(k + 1):
            for m2 in range(k + 1 - m1):
                xs = range(n) if m1 > 0 else (None,)
                for jx in xs:
                    mid = base
                    if m1 > 0:
                        mid = diff_axis(
                            mid, x_axes[jx], grid.spacings[jx], order=m1
                        )
                    ys = range(n) if m2 > 0 else (None,)
                    for ky in ys:
                        term = mid
                        if m2 > 0:
                            term = diff_axis(
                                term, y_axes[ky], grid.spacings[ky], order=m2
                            )
                        total += _box_integral(np.abs(term) ** s, weights)
    return total ** (1.0 / s)


# ---------------------------------------------------------------------------
# dump format
# ---------------------------------------------------------------------------

_MAGIC = b"CDGF"
_VERSION = 1
_ARITY_CODE = {"x": 1, "xy": 2, "txy": 3}
_ARITY_FROM = {v: k for k, v in _ARITY_CODE.items()}


def dump_field(f: GridField, path: str) -> None:
    """Write a GridField with a fixed, documented byte layout.

    Layout (little-endian):
      magic   4 bytes  b"CDGF"
      u32     version (1)
      u8      arity code (1 = x, 2 = xy, 3 = txy)
      u8      value kind (0 = complex scalar, 1 = algebra coefficients)
      u8      level (0 for scalar fields)
      u8      spatial dimension n
      f64,u64 t_max, t_count (only when arity = txy)
      n times f64 lo, f64 hi, u64 count  (per spatial axis)
      payload complex128 values, C row-major, shape as per arity
              (trailing coefficient axis of length 2^level when kind = 1)
    """
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(
            struct.pack(
                "<BBBB",
                _ARITY_CODE[f.arity],
                1 if f.is_algebra_valued else 0,
                f.level or 0,
                g.n,
            )
        )
        if f.arity == "txy":
            fh.write(struct.pack("<dQ", g.t_max, g.t_count))
        for (lo, hi), c in zip(g.bounds, g.counts):
            fh.write(struct.pack("<ddQ", lo, hi, c))
        fh.write(np.ascontiguousarray(f.values).tobytes())


def load_field(path: str) -> GridField:
    """Read a GridField written by dump_field."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field dump")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"unsupported dump version {version}")
        ac, kind, level, n = struct.unpack("<BBBB", fh.read(4))
        arity = _ARITY_FROM[ac]
        t_max = t_count = None
        if arity == "txy":
            t_max, t_count = struct.unpack("<dQ", fh.read(16))
        bounds, counts = [], []
        for _ in range(n):
            lo, hi, c = struct.unpack("<ddQ", fh.read(24))
            bounds.append((lo, hi))
            counts.append(int(c))
        grid = Grid(tuple(bounds), tuple(counts), t_max, t_count)
        lev = level if kind == 1 else None
        shape = grid.shape(arity, lev)
        data = np.frombuffer(
            fh.read(), dtype=np.complex128, count=int(np.prod(shape))
        ).reshape(shape)
        return GridField(grid, arity, data.copy(), lev)
