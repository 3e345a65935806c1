"""Periodic grids, discrete norms and the divergence-form stiffness operator.

Grid functions are plain numpy arrays of shape ``grid.shape``. The
stiffness operator is written as a sum over the ``2**dim`` one-sided
gradient "quadrants" of each node,

    a_h(t; u, v) = h^dim * sum_x 1/2^dim * sum_s  G_s(u) . a(t, x + s h/2) G_s(v),

where ``G_s`` is the one-sided difference gradient pointing into quadrant
``s``. In 1D this is the usual conservative three-point flux form with face
coefficients ``a(t, x +- h/2)``. Summed over quadrants every forward
difference appears exactly once, so ``kappa |D_h u|^2 <= a_h(u, u) <=
|D_h u|^2 / kappa`` holds exactly whenever the matrix bounds hold pointwise.
"""

import itertools
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    n: int
    side: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.n < 4:
            raise ValueError("need at least 4 points per dimension")
        if not self.side > 0:
            raise ValueError("side must be positive")

    @property
    def h(self):
        return self.side / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n ** self.dim

    @property
    def cell_volume(self):
        return self.h ** self.dim

    def coordinates(self, offset=None):
        """Node coordinates of shape ``shape + (dim,)``, optionally shifted by ``offset * h``."""
        axes = [np.arange(self.n) * self.h for _ in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if offset is not None:
            mesh = mesh + np.asarray(offset, dtype=float) * self.h
        return mesh

    def wavenumbers(self):
        """Angular wavenumbers per axis in ``numpy.fft`` ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def laplacian_symbol(self, c=1.0):
        """Fourier symbol of ``c * L_h`` (forward-difference Laplacian), shape ``shape``."""
        k = self.wavenumbers()
        one_axis = (2.0 / self.h ** 2) * (1.0 - np.cos(k * self.h))
        sym = np.zeros(self.shape)
        for axis in range(self.dim):
            idx = [None] * self.dim
            idx[axis] = slice(None)
            sym = sym + one_axis[tuple(idx)]
        return c * sym

    def check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"state of shape {u.shape} does not match grid {self.shape}")
        return u


def l2_inner(grid, u, v):
    u, v = grid.check(u), grid.check(v)
    return grid.cell_volume * float(np.vdot(u, v))


def l2_norm(grid, u):
    return float(np.sqrt(l2_inner(grid, u, u)))


def forward_differences(grid, u):
    """Forward periodic differences, one array per axis."""
    return [(np.roll(u, -1, axis=a) - u) / grid.h for a in range(grid.dim)]


def h1_norm(grid, u):
    u = grid.check(u)
    total = l2_inner(grid, u, u)
    for d in forward_differences(grid, u):
        total += l2_inner(grid, d, d)
    return float(np.sqrt(total))


def hminus1_norm(grid, u):
    """``||(I + L_h)^{-1/2} u||_2`` by discrete Fourier diagonalization."""
    u = grid.check(u)
    uh = np.fft.fftn(u)
    weight = 1.0 / (1.0 + grid.laplacian_symbol())
    total = grid.cell_volume * np.sum(weight * np.abs(uh) ** 2) / grid.size
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# stiffness operator


def _quadrants(dim):
    return list(itertools.product((1, -1), repeat=dim))


def quadrant_coefficients(fld, grid, t):
    """Coefficient matrices at the quadrant centres ``x + s h/2`` for every quadrant ``s``."""
    if not 0.0 <= t <= fld.horizon * (1 + 1e-12):
        raise ValueError(f"time {t} outside [0, {fld.horizon}]")
    if fld.dim != grid.dim:
        raise ValueError("field and grid dimensions differ")
    return [np.asarray(fld(t, grid.coordinates(0.5 * np.array(s)))) for s in _quadrants(grid.dim)]


def _one_sided(grid, u, s):
    return [s[a] * (np.roll(u, -s[a], axis=a) - u) / grid.h for a in range(grid.dim)]


def _stencil(grid, coeffs, u):
    dim = grid.dim
    out = np.zeros(grid.shape)
    for s, a in zip(_quadrants(dim), coeffs):
        g = _one_sided(grid, u, s)
        for i in range(dim):
            flux = sum(a[..., i, j] * g[j] for j in range(dim))
            # adjoint of the one-sided difference s_i (S_{s_i} - I) / h
            out += s[i] * (np.roll(flux, s[i], axis=i) - flux) / grid.h
    return out / 2 ** dim


def apply_stiffness(fld, grid, t, u):
    """Matrix-free ``A_h(t) u``, the discrete ``-div(a(t, .) grad u)``."""
    u = grid.check(u)
    return _stencil(grid, quadrant_coefficients(fld, grid, t), u)


def bilinear_a(fld, grid, t, u, v):
    return l2_inner(grid, apply_stiffness(fld, grid, t, u), v)


def flux_form(fld, grid, t, u, v):
    """``a_h(t; u, v)`` summed directly over quadrant gradients."""
    u, v = grid.check(u), grid.check(v)
    total = 0.0
    for s, a in zip(_quadrants(grid.dim), quadrant_coefficients(fld, grid, t)):
        gu, gv = _one_sided(grid, u, s), _one_sided(grid, v, s)
        for i in range(grid.dim):
            for j in range(grid.dim):
                total += float(np.sum(a[..., i, j] * gu[j] * gv[i]))
    return grid.cell_volume * total / 2 ** grid.dim


def _difference_matrix(grid, axis, s):
    """Sparse ``s (S_s - I) / h`` along ``axis``."""
    n = grid.n
    shift = sp.diags([np.ones(n)], [s], shape=(n, n), format="csr")
    shift = shift + sp.diags([np.ones(abs(s))], [-s * (n - 1)], shape=(n, n))
    d1 = s * (shift - sp.identity(n)) / grid.h
    mats = [sp.identity(n)] * grid.dim
    mats[axis] = d1
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m)
    return sp.csr_matrix(out)


def assemble_stiffness(fld, grid, t):
    """Sparse matrix of ``A_h(t)`` acting on C-order flattened states."""
    dim = grid.dim
    total = sp.csr_matrix((grid.size, grid.size))
    for s, a in zip(_quadrants(dim), quadrant_coefficients(fld, grid, t)):
        ds = [_difference_matrix(grid, i, s[i]) for i in range(dim)]
        for i in range(dim):
            for j in range(dim):
                w = sp.diags(a[..., i, j].ravel())
                total = total + ds[i].T @ w @ ds[j]
    total = total / 2 ** dim
    return sp.csr_matrix(total)


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"PRSTATE1"


def save_state(path, grid, u):
    """Write a state as CSV (``.csv``) or flat little-endian binary (anything else).

    The CSV header is ``# dim=<d> n=<N> side=<L>`` followed by one nodal value
    per line in C order; floats use their shortest round-trip representation.
    """
    u = grid.check(u)
    path = str(path)
    if path.endswith(".csv"):
        with open(path, "w") as fh:
            fh.write(f"# dim={grid.dim} n={grid.n} side={grid.side!r}\n")
            for val in u.ravel():
                fh.write(f"{float(val)!r}\n")
    else:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<iid", grid.dim, grid.n, grid.side))
            fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def load_state(path):
    """Inverse of :func:`save_state`; returns ``(grid, values)``."""
    path = str(path)
    if path.endswith(".csv"):
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValueError(f"{path}: missing state header")
            fields = dict(item.split("=") for item in header[1:].split())
            grid = PeriodicGrid(int(fields["dim"]), int(fields["n"]), float(fields["side"]))
            values = np.array([float(line) for line in fh if line.strip()])
    else:
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path}: not a state file")
            dim, n, side = struct.unpack("<iid", fh.read(16))
            grid = PeriodicGrid(dim, n, side)
            values = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid, values.reshape(grid.shape)
