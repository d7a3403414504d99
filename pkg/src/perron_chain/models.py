"""Built-in infinite test models with known spectral data.

Each constructor returns a ModelSpec: a lazy source plus a metadata dict of
analytic reference values. The references are metadata, not inputs: nothing
in the solvers reads them, they exist so tests and the CLI can compare
computed quantities against closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DomainError, ParseError
from .matrix import LazyMatrix, LazyMetzler


@dataclass
class ModelSpec:
    name: str
    source: LazyMatrix | LazyMetzler
    meta: dict = field(default_factory=dict)
    u_ref: Callable[[int], float] | None = None


def srw_line(p: float) -> ModelSpec:
    """Simple random walk on the integers: a_{i,i+1} = p, a_{i,i-1} = 1 - p.

    R_ref = 1/(2 sqrt(p(1-p))) and the left vector normalized at 0 is
    u_i = (p/(1-p))^{i/2}. The walk is R-recurrent (null): the weighted
    return series reaches 1 but only at polynomial speed.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie strictly between 0 and 1, got {p}")
    q = 1.0 - p

    def row(i: int):
        return [(i - 1, q), (i + 1, p)]

    t = math.sqrt(p / q)
    return ModelSpec(
        name="srw",
        source=LazyMatrix(row, assume_irreducible=True),
        meta={
            "p": p,
            "R_ref": 1.0 / (2.0 * math.sqrt(p * q)),
            "recurrence_ref": "R-recurrent",
        },
        u_ref=lambda i: t ** i,
    )


def birth_death(birth: float, death: float) -> ModelSpec:
    """Constant-rate birth-death weights on the half line, reflecting at 0.

    Row 0 has only the upward entry, so the similarity-transformed matrix at
    weight R is a symmetric half-walk that loses half its mass whenever it
    sits at 0. Consequences, independent of the rates: R_ref is
    1/(2 sqrt(birth*death)) and the weighted return series converges to
    exactly 1/2, making the chain R-transient. The excursion series then
    lands on the minimal subinvariant vector u_i = t^i, t = sqrt(birth/death)
    (that is u_ref), not on the genuine eigenvector (i+1) t^i: at state 0 the
    identity u A = u/R retains only the half carried by returning paths.
    """
    if birth <= 0.0 or death <= 0.0:
        raise DomainError(f"rates must be positive, got birth={birth} death={death}")

    def row(i: int):
        if i == 0:
            return [(1, birth)]
        return [(i - 1, death), (i + 1, birth)]

    t = math.sqrt(birth / death)
    return ModelSpec(
        name="bd",
        source=LazyMatrix(row, assume_irreducible=True),
        meta={
            "birth": birth,
            "death": death,
            "R_ref": 1.0 / (2.0 * math.sqrt(birth * death)),
            "return_series_ref": 0.5,
            "recurrence_ref": "R-transient",
        },
        u_ref=lambda i: t ** i,
    )


def metzler_tridiagonal(diag: float, off: float) -> ModelSpec:
    """Constant tridiagonal Metzler matrix on the integers.

    g_ii = diag (any sign), g_{i,i+-1} = off > 0. The spectral bound is
    lambda_ref = diag + 2*off and the positive eigenvector is flat.
    """
    if off <= 0.0:
        raise DomainError(f"off-diagonal entry must be positive, got {off}")

    def row(i: int):
        out = [(i - 1, off), (i + 1, off)]
        if diag != 0.0:
            out.append((i, diag))
        return out

    return ModelSpec(
        name="metzler-tri",
        source=LazyMetzler(row, diag_bound=abs(diag), assume_irreducible=True),
        meta={
            "diag": diag,
            "off": off,
            "lambda_ref": diag + 2.0 * off,
        },
        u_ref=lambda i: 1.0,
    )


_MODEL_KEYS = {
    "srw": ("p",),
    "bd": ("lambda", "mu"),
    "metzler-tri": ("diag", "off"),
}


def parse_model(text: str) -> ModelSpec:
    """Model strings: srw:p=0.3 | bd:lambda=1,mu=2 | metzler-tri:diag=-2,off=1."""
    name, sep, rest = text.partition(":")
    name = name.strip()
    if name not in _MODEL_KEYS:
        raise ParseError(f"unknown model {name!r}; expected one of {sorted(_MODEL_KEYS)}")
    args: dict[str, float] = {}
    if sep:
        for piece in rest.split(","):
            key, eq, val = piece.partition("=")
            key = key.strip()
            if not eq or key not in _MODEL_KEYS[name]:
                raise ParseError(f"bad model argument {piece!r} for {name!r}")
            try:
                args[key] = float(val)
            except ValueError:
                raise ParseError(f"model argument {key!r} is not a number: {val!r}") from None
    missing = [key for key in _MODEL_KEYS[name] if key not in args]
    if missing:
        raise ParseError(f"model {name!r} needs {'/'.join(missing)}, e.g. "
                         f"srw:p=0.3, bd:lambda=1,mu=2, metzler-tri:diag=-2,off=1")
    if name == "srw":
        return srw_line(args["p"])
    if name == "bd":
        return birth_death(args["lambda"], args["mu"])
    return metzler_tridiagonal(args["diag"], args["off"])
