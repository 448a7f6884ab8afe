"""Serialization: the native lattice checkpoint and .cube export.

The native format is a plain-text token stream so diffs stay readable:

    NULUT3D 1
    size <n_s>
    coords r <n_s floats>
    coords g <n_s floats>
    coords b <n_s floats>
    values
    <3 * n_s^3 floats in channel, i, j, k order, k fastest>
    [predictor <f_dim> <m> <shared 0|1>
     g_weights <...> g_bias <...> h0_weights <...> h0_bias <...>
     h1_weights <...> h1_bias <...>]

Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly.  Loading re-validates every lattice invariant.
"""

from __future__ import annotations

import numpy as np

from .lattice import Lattice
from .predictor import PredictorParams
from .transform import _transform_block

FORMAT_MAGIC = "NULUT3D"
FORMAT_VERSION = 1

_PREDICTOR_FIELDS = (
    "g_weights",
    "g_bias",
    "h0_weights",
    "h0_bias",
    "h1_weights",
    "h1_bias",
)


class LutFormatError(ValueError):
    pass


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in values)


def save_lattice(lattice: Lattice, path, predictor: PredictorParams | None = None):
    """Write a lattice (and optionally predictor parameters) to path."""
    n = lattice.n_s
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{FORMAT_MAGIC} {FORMAT_VERSION}\n")
        fh.write(f"size {n}\n")
        for c, name in enumerate("rgb"):
            fh.write(f"coords {name} {_fmt(lattice.coords[c])}\n")
        fh.write("values\n")
        flat = lattice.values.reshape(3 * n * n, n)
        for row in flat:
            fh.write(_fmt(row) + "\n")
        if predictor is not None:
            shared = 1 if predictor.shared else 0
            fh.write(f"predictor {predictor.f_dim} {predictor.m} {shared}\n")
            arrays = {
                "g_weights": predictor.g_weights,
                "g_bias": predictor.g_bias,
                "h0_weights": predictor.h0_weights,
                "h0_bias": predictor.h0_bias,
                "h1_weights": predictor.basis_luts,
                "h1_bias": predictor.h1_bias,
            }
            for name in _PREDICTOR_FIELDS:
                arr = arrays[name]
                fh.write(f"{name}\n")
                for row in np.atleast_2d(arr):
                    fh.write(_fmt(row) + "\n")


class _Tokens:
    def __init__(self, text):
        self.tokens = text.split()
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.tokens):
            raise LutFormatError(f"unexpected end of file, expected {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal):
        tok = self.next(f"'{literal}'")
        if tok != literal:
            raise LutFormatError(f"expected '{literal}', found '{tok}'")

    def take_int(self, what):
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise LutFormatError(f"expected integer {what}, found '{tok}'") from None

    def take_floats(self, count, what):
        out = np.empty(count)
        for i in range(count):
            tok = self.next(f"{what} value {i}")
            try:
                out[i] = float(tok)
            except ValueError:
                raise LutFormatError(
                    f"expected float in {what}, found '{tok}'"
                ) from None
        return out

    def done(self):
        return self.pos >= len(self.tokens)


def _check_row(name, row):
    if row[0] != 0.0:
        raise LutFormatError(f"coords {name}: first entry must be 0, got {row[0]!r}")
    if abs(row[-1] - 1.0) > 1e-9:
        raise LutFormatError(f"coords {name}: last entry must be 1, got {row[-1]!r}")
    diffs = np.diff(row)
    bad = np.nonzero(diffs <= 0.0)[0]
    if bad.size:
        raise LutFormatError(f"coords {name}: non-monotone at index {bad[0] + 1}")


def load_checkpoint(path) -> tuple[Lattice, PredictorParams | None]:
    """Read a checkpoint, returning the lattice and any predictor section."""
    with open(path, "r", encoding="ascii") as fh:
        toks = _Tokens(fh.read())
    magic = toks.next("format magic")
    if magic != FORMAT_MAGIC:
        raise LutFormatError(f"bad magic '{magic}', expected '{FORMAT_MAGIC}'")
    version = toks.take_int("format version")
    if version != FORMAT_VERSION:
        raise LutFormatError(f"unsupported version {version}")
    toks.expect("size")
    n = toks.take_int("lattice size")
    if n < 2:
        raise LutFormatError(f"lattice size must be >= 2, got {n}")
    coords = np.empty((3, n))
    for c, name in enumerate("rgb"):
        toks.expect("coords")
        toks.expect(name)
        coords[c] = toks.take_floats(n, f"coords {name}")
        _check_row(name, coords[c])
    toks.expect("values")
    values = toks.take_floats(3 * n**3, "values").reshape(3, n, n, n)
    if not np.all(np.isfinite(values)):
        raise LutFormatError("values must be finite")
    lattice = Lattice(coords, values)

    predictor = None
    if not toks.done():
        toks.expect("predictor")
        f_dim = toks.take_int("feature dimension")
        m = toks.take_int("basis count")
        shared = toks.take_int("shared flag")
        if shared not in (0, 1):
            raise LutFormatError(f"shared flag must be 0 or 1, got {shared}")
        k = n - 1
        logit_dim = k if shared else 3 * k
        table_dim = 3 * n**3
        sizes = {
            "g_weights": (f_dim, logit_dim),
            "g_bias": (logit_dim,),
            "h0_weights": (f_dim, m),
            "h0_bias": (m,),
            "h1_weights": (m, table_dim),
            "h1_bias": (table_dim,),
        }
        arrays = {}
        for name in _PREDICTOR_FIELDS:
            toks.expect(name)
            shape = sizes[name]
            arrays[name] = toks.take_floats(int(np.prod(shape)), name).reshape(shape)
        predictor = PredictorParams(
            g_weights=arrays["g_weights"],
            g_bias=arrays["g_bias"],
            h0_weights=arrays["h0_weights"],
            h0_bias=arrays["h0_bias"],
            basis_luts=arrays["h1_weights"],
            h1_bias=arrays["h1_bias"],
            n_s=n,
            m=m,
            f_dim=f_dim,
            shared=bool(shared),
        )
    if not toks.done():
        raise LutFormatError(f"trailing data from token {toks.pos}")
    return lattice, predictor


def load_lattice(path) -> Lattice:
    """Read just the lattice from a checkpoint."""
    return load_checkpoint(path)[0]


def export_cube(lattice: Lattice, n_out: int, path) -> None:
    """Resample onto a uniform grid and write Adobe/Resolve .cube text.

    The .cube format only supports uniform grids, so each output entry is
    the lattice transform evaluated at the grid point, clipped to [0, 1].
    Lines run with the red index fastest, as the format requires.
    """
    if n_out < 2:
        raise ValueError(f"cube size must be >= 2, got {n_out}")
    grid = np.arange(n_out, dtype=np.float64) / (n_out - 1)
    grid[-1] = 1.0
    line = np.arange(n_out**3)
    red = line % n_out
    green = (line // n_out) % n_out
    blue = line // (n_out * n_out)
    pix = np.stack([grid[red], grid[green], grid[blue]], axis=0)
    out = _transform_block(pix, lattice.coords, lattice.values)
    np.clip(out, 0.0, 1.0, out=out)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"LUT_3D_SIZE {n_out}\n")
        for col in range(out.shape[1]):
            fh.write(f"{out[0, col]:.17g} {out[1, col]:.17g} {out[2, col]:.17g}\n")
