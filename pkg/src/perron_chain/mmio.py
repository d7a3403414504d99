"""Matrix Market coordinate I/O.

Reads `matrix coordinate real general` files into a FiniteMatrix, or into a
FiniteMetzler when any diagonal entry is negative (the only place a Metzler
matrix can differ from a non-negative one). Indices are 1-based on disk and
0-based in memory. Values are written with 17 significant digits so a
write/read round trip reproduces every float64 bit for bit.

scipy.io.mmread is deliberately not used: it sums duplicate entries silently,
and duplicates here are a reportable input error.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, DuplicateEntry, ParseError
from .matrix import FiniteMatrix, FiniteMetzler

_HEADER = ("matrix", "coordinate", "real", "general")


def read_matrix(path) -> FiniteMatrix | FiniteMetzler:
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline()
        if not first.startswith("%%MatrixMarket"):
            raise ParseError(f"{path}: missing %%MatrixMarket header")
        fields = tuple(tok.lower() for tok in first.split()[1:])
        if fields != _HEADER:
            raise ParseError(
                f"{path}: unsupported header {' '.join(fields)!r}; "
                f"only '{' '.join(_HEADER)}' files are read")
        size = None
        rows, cols, vals = [], [], []
        seen: set[tuple[int, int]] = set()
        dropped = 0
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            parts = line.split()
            if size is None:
                if len(parts) != 3:
                    raise ParseError(f"{path}:{lineno}: size line needs 3 integers")
                try:
                    n, m, nnz = (int(tok) for tok in parts)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad size line {line!r}") from None
                if n != m:
                    raise DomainError(f"{path}: matrix must be square, got {n} x {m}")
                if n < 1 or nnz < 0:
                    raise ParseError(f"{path}:{lineno}: bad size line {line!r}")
                size = (n, nnz)
                continue
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: entry needs 'i j value'")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad entry {line!r}") from None
            n = size[0]
            if not (1 <= i <= n and 1 <= j <= n):
                raise ParseError(f"{path}:{lineno}: index ({i}, {j}) outside 1..{n}")
            if (i, j) in seen:
                raise DuplicateEntry(f"{path}:{lineno}: entry ({i}, {j}) appears twice")
            seen.add((i, j))
            if v == 0.0:
                dropped += 1
                continue
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
    if size is None:
        raise ParseError(f"{path}: no size line")
    n, nnz = size
    if len(seen) != nnz:
        raise ParseError(f"{path}: size line promised {nnz} entries, found {len(seen)}")
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} explicit zero entr"
                      f"{'y' if dropped == 1 else 'ies'}", stacklevel=2)
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    diag_negative = any(v < 0.0 for r, c, v in zip(rows, cols, vals) if r == c)
    if diag_negative:
        return FiniteMetzler(coo.toarray())
    return FiniteMatrix(coo.tocsr())


def write_matrix(path, m: FiniteMatrix | FiniteMetzler) -> None:
    if isinstance(m, FiniteMetzler):
        coo = sp.coo_matrix(m.g)
    elif isinstance(m, FiniteMatrix):
        coo = m.csr.tocoo()
    else:
        raise DomainError(f"cannot write a {type(m).__name__} to disk")
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for idx in order:
            fh.write(f"{coo.row[idx] + 1} {coo.col[idx] + 1} "
                     f"{coo.data[idx]:.17g}\n")
