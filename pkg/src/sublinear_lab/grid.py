"""Discretized geometry for the Neumann problem -Δu = a(x) u^q.

Two kinds of domain are supported: an interval (x0, x1) and a ball of
radius R in R^N, the latter treated through its radial profile on [0, R].
Both use a uniform vertex-centred finite-volume discretization, so the
discrete Laplacian is symmetric with respect to the cell measures and
annihilates constants exactly.

Fields are plain ``numpy`` arrays with one value per node; functions that
take a field check its length against the grid.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

MIN_NODES = 16


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N (2 for N=1, 2π for N=2, ...)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@dataclass(frozen=True)
class GridSpec:
    kind: str
    nodes: int
    x0: float = 0.0
    x1: float = 1.0
    R: float = 1.0
    N: int = 1

    def __post_init__(self):
        if self.kind not in ("interval", "ball"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if int(self.nodes) != self.nodes or self.nodes < MIN_NODES:
            raise ValueError(f"nodes must be an integer >= {MIN_NODES}, got {self.nodes}")
        if self.kind == "interval" and not self.x0 < self.x1:
            raise ValueError(f"interval needs x0 < x1, got ({self.x0}, {self.x1})")
        if self.kind == "ball":
            if not self.R > 0:
                raise ValueError(f"ball radius must be positive, got {self.R}")
            if int(self.N) != self.N or self.N < 1:
                raise ValueError(f"ball dimension must be a positive integer, got {self.N}")

    @classmethod
    def interval(cls, x0: float, x1: float, nodes: int) -> GridSpec:
        return cls(kind="interval", nodes=int(nodes), x0=float(x0), x1=float(x1))

    @classmethod
    def ball(cls, R: float, N: int, nodes: int) -> GridSpec:
        return cls(kind="ball", nodes=int(nodes), R=float(R), N=int(N))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else self.N


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes, cell measures and face areas of a uniform discretization.

    ``measures[i]`` is the measure of the control volume around node i and
    ``faces[i]`` the area of the face between nodes i and i+1. Outer faces
    carry no flux (Neumann); for the ball the face at r=0 has zero area.
    """

    spec: GridSpec
    coordinates: np.ndarray
    measures: np.ndarray
    faces: np.ndarray
    h: float
    _stiff: tuple = field(repr=False, default=())

    @property
    def n(self) -> int:
        return self.coordinates.size

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def N(self) -> int:
        return self.spec.dim

    @property
    def omega(self) -> float:
        """Angular factor: ω_{N-1} for balls, 1 for intervals."""
        return sphere_area(self.spec.N) if self.kind == "ball" else 1.0

    @property
    def volume(self) -> float:
        s = self.spec
        if s.kind == "interval":
            return s.x1 - s.x0
        return sphere_area(s.N) * s.R**s.N / s.N

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Indices of nodes lying on ∂Ω (r=0 is interior for balls)."""
        if self.kind == "interval":
            return np.array([0, self.n - 1])
        return np.array([self.n - 1])

    def stiffness_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the symmetric stiffness matrix S.

        The discrete Neumann operator is -Δ_h = M^{-1} S with M = diag(measures).
        """
        return self._stiff

    def check(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"{name} has shape {f.shape}, grid has {self.n} nodes")
        return f


def build_grid(spec: GridSpec) -> Grid:
    n = spec.nodes
    if spec.kind == "interval":
        x = np.linspace(spec.x0, spec.x1, n)
        h = (spec.x1 - spec.x0) / (n - 1)
        measures = np.full(n, h)
        measures[0] = measures[-1] = h / 2
        faces = np.ones(n - 1)
    else:
        x = np.linspace(0.0, spec.R, n)
        h = spec.R / (n - 1)
        w = sphere_area(spec.N)
        edges = np.concatenate(([0.0], 0.5 * (x[1:] + x[:-1]), [spec.R]))
        measures = w * np.diff(edges**spec.N) / spec.N
        faces = w * edges[1:-1] ** (spec.N - 1)
    diag = np.zeros(n)
    diag[:-1] += faces / h
    diag[1:] += faces / h
    off = -faces / h
    grid = Grid(spec=spec, coordinates=x, measures=measures, faces=faces, h=h, _stiff=(diag, off))
    return grid


def integrate(grid: Grid, f) -> float:
    """Σ f_i · measure_i (trapezoid rule on intervals, cell rule on balls)."""
    f = grid.check(f)
    return float(np.dot(f, grid.measures))


def stiffness_apply(grid: Grid, u) -> np.ndarray:
    """S u, i.e. the weak form ∫∇u·∇η_i for every nodal test function."""
    # flux form, so constants map to exactly zero
    flux = grid.faces * np.diff(u) / grid.h
    out = np.zeros_like(u)
    out[:-1] -= flux
    out[1:] += flux
    return out


def neg_laplacian(grid: Grid, u) -> np.ndarray:
    """-Δ_h u with Neumann closure (mirror ghost nodes; Δu(0)=N u''(0) on balls)."""
    u = grid.check(u, "u")
    return stiffness_apply(grid, u) / grid.measures


def dirichlet_form(grid: Grid, u) -> float:
    """Discrete ∫|∇u|²."""
    u = grid.check(u, "u")
    return float(np.sum(grid.faces * np.diff(u) ** 2) / grid.h)


def gradient(grid: Grid, u) -> np.ndarray:
    """Second-order nodal derivative du/dx (or du/dr), one-sided at the ends."""
    u = grid.check(u, "u")
    return np.gradient(u, grid.h, edge_order=2)


def power(u, q: float) -> np.ndarray:
    """(max(u, 0))^q, the nonlinearity used everywhere."""
    return np.maximum(u, 0.0) ** q


def residual(grid: Grid, a, q: float, u) -> np.ndarray:
    """Nodal residual -Δ_h u - a (u⁺)^q of the model equation."""
    if q < 0:
        raise ValueError(f"exponent q must be nonnegative, got {q}")
    a = grid.check(a, "weight")
    return neg_laplacian(grid, u) - a * power(u, q)


def tridiag_solve(diag, off, rhs, lower_off=None) -> np.ndarray:
    """Solve a tridiagonal system (symmetric unless ``lower_off`` is given)."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off if lower_off is None else lower_off
    return solve_banded((1, 1), ab, rhs, check_finite=False)


# -- CSV exchange ------------------------------------------------------------


def field_header(grid: Grid) -> str:
    return f"# kind={grid.kind} N={grid.N} nodes={grid.n}"


def write_field_csv(path, grid: Grid, values) -> None:
    values = grid.check(values)
    buf = io.StringIO()
    buf.write(field_header(grid) + "\n")
    for x, v in zip(grid.coordinates, values):
        buf.write(f"{x:.17g},{v:.17g}\n")
    Path(path).write_text(buf.getvalue())


def read_field_csv(path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Return (header fields, coordinates, values) of a field CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# kind=... N=... nodes=...' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if int(meta["nodes"]) != data.shape[0]:
        raise ValueError(f"{path}: header says {meta['nodes']} nodes, found {data.shape[0]}")
    return meta, data[:, 0], data[:, 1]
