"""Tensor wheel factors: initialization, reconstruction, and checkpoints.

A third-order tensor of shape (I, J, K) is represented by a core tensor
``g`` of shape (H1, H2, H3) and three fourth-order ring factors

    a: (R3, I, R1, H1),   b: (R1, J, R2, H2),   c: (R2, K, R3, H3),

chained cyclically through the ring ranks (R1, R2, R3) and each tied to
the core through one core-link rank (H1, H2, H3).  A single element is
the six-fold contraction over (r1, r2, r3, h1, h2, h3) of
``g[h1,h2,h3] * a[r3,i,r1,h1] * b[r1,j,r2,h2] * c[r2,k,r3,h3]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ParameterError, SizeCapError

DENSE_CAP = 10_000_000  # max elements a dense reconstruction may materialize

CHECKPOINT_MAGIC = "TWD v1"


@dataclass(frozen=True)
class Ranks:
    """Ring ranks (R1, R2, R3) and core-link ranks (H1, H2, H3)."""

    r: tuple[int, int, int]
    h: tuple[int, int, int]

    def __post_init__(self):
        for name, triple in (("r", self.r), ("h", self.h)):
            if len(triple) != 3 or any(int(x) != x or x < 1 for x in triple):
                raise ParameterError(f"ranks.{name} must be three integers >= 1, got {triple}")
        object.__setattr__(self, "r", tuple(int(x) for x in self.r))
        object.__setattr__(self, "h", tuple(int(x) for x in self.h))

    @classmethod
    def from_dim(cls, dim: int) -> "Ranks":
        """Map a single latent dimension to a full rank tuple.

        The headline value goes to the three ring ranks; core-link ranks
        stay at 2 to keep the core tensor small.
        """
        if dim < 1:
            raise ParameterError(f"latent dimension must be >= 1, got {dim}")
        return cls(r=(dim, dim, dim), h=(2, 2, 2))


@dataclass
class TwdFactors:
    """Dense factor set of one tensor wheel model.

    Arrays are float64, row-major, mutated in place by the trainer and
    read-only everywhere else.
    """

    g: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    dims: tuple[int, int, int]
    ranks: Ranks

    def __post_init__(self):
        ni, nj, nk = self.dims
        r1, r2, r3 = self.ranks.r
        h1, h2, h3 = self.ranks.h
        expected = {
            "g": (h1, h2, h3),
            "a": (r3, ni, r1, h1),
            "b": (r1, nj, r2, h2),
            "c": (r2, nk, r3, h3),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ParameterError(f"factor {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"factor {name} contains non-finite values")

    def copy(self) -> "TwdFactors":
        return TwdFactors(self.g.copy(), self.a.copy(), self.b.copy(),
                          self.c.copy(), self.dims, self.ranks)

    @property
    def n_parameters(self) -> int:
        return self.g.size + self.a.size + self.b.size + self.c.size


def init_factors(dims, ranks: Ranks, seed: int, scale: float) -> TwdFactors:
    """Draw every factor element i.i.d. uniform from [0, scale).

    Generation order is fixed (g, a, b, c from one seeded generator), so
    a given seed always produces the same factors.
    """
    ni, nj, nk = (int(d) for d in dims)
    if min(ni, nj, nk) < 1:
        raise ParameterError(f"dims must be >= 1, got {dims}")
    if scale < 0:
        raise ParameterError(f"init scale must be >= 0, got {scale}")
    r1, r2, r3 = ranks.r
    h1, h2, h3 = ranks.h
    rng = np.random.default_rng(seed)
    g = rng.random((h1, h2, h3)) * scale
    a = rng.random((r3, ni, r1, h1)) * scale
    b = rng.random((r1, nj, r2, h2)) * scale
    c = rng.random((r2, nk, r3, h3)) * scale
    return TwdFactors(g, a, b, c, (ni, nj, nk), ranks)


def _check_index(f: TwdFactors, i: int, j: int, k: int):
    ni, nj, nk = f.dims
    if not (0 <= i < ni and 0 <= j < nj and 0 <= k < nk):
        raise BoundsError(f"index ({i}, {j}, {k}) outside dims {f.dims}")


def reconstruct_entry(f: TwdFactors, i: int, j: int, k: int) -> float:
    """Reconstruct one element via staged partial contractions.

    Mathematically identical to the naive six-fold sum (see
    ``oracle_entry``); the staging only changes the summation order.
    """
    _check_index(f, i, j, k)
    a_i = f.a[:, i]  # (R3, R1, H1)
    b_j = f.b[:, j]  # (R1, R2, H2)
    c_k = f.c[:, k]  # (R2, R3, H3)
    # (R3, H1, R2, H2) <- sum over r1
    ab = np.tensordot(a_i, b_j, axes=([1], [0]))
    # (H1, H2, H3) <- sum over r3, r2; the same staging the trainer uses,
    # so per-entry reconstructions match the training path bit for bit
    abc = np.tensordot(ab, c_k, axes=([0, 2], [1, 0]))
    return float(np.vdot(abc, f.g))


def oracle_entry(f: TwdFactors, i: int, j: int, k: int) -> float:
    """Reference single-element reconstruction by explicit six-nested loops.

    Deliberately unoptimized; exists only to cross-check
    ``reconstruct_entry`` in tests.
    """
    _check_index(f, i, j, k)
    r1n, r2n, r3n = f.ranks.r
    h1n, h2n, h3n = f.ranks.h
    total = 0.0
    for r1 in range(r1n):
        for r2 in range(r2n):
            for r3 in range(r3n):
                for h1 in range(h1n):
                    for h2 in range(h2n):
                        for h3 in range(h3n):
                            total += (f.g[h1, h2, h3]
                                      * f.a[r3, i, r1, h1]
                                      * f.b[r1, j, r2, h2]
                                      * f.c[r2, k, r3, h3])
    return total


def reconstruct_entries(f: TwdFactors, ii: np.ndarray, jj: np.ndarray,
                        kk: np.ndarray) -> np.ndarray:
    """Reconstruct many elements at once; same contraction as
    ``reconstruct_entry`` batched over gathered slices."""
    ni, nj, nk = f.dims
    if len(ii) == 0:
        return np.zeros(0)
    if (ii.min() < 0 or ii.max() >= ni or jj.min() < 0 or jj.max() >= nj
            or kk.min() < 0 or kk.max() >= nk):
        raise BoundsError(f"batch indices outside dims {f.dims}")
    # letters as in reconstruct_full, with n the batch axis
    return np.einsum("xnyp,ynzq,znxr,pqr->n", f.a[:, ii], f.b[:, jj], f.c[:, kk],
                     f.g, optimize=True)


def reconstruct_full(f: TwdFactors, cap: int = DENSE_CAP) -> np.ndarray:
    """Materialize the full dense reconstruction of shape ``f.dims``.

    Raises SizeCapError when the element count exceeds ``cap``.
    """
    ni, nj, nk = f.dims
    if ni * nj * nk > cap:
        raise SizeCapError(f"dense reconstruction of {ni * nj * nk} elements exceeds cap {cap}")
    # letters: x=r3, y=r1, z=r2, p=h1, q=h2, r=h3
    return np.einsum("xiyp,yjzq,zkxr,pqr->ijk", f.a, f.b, f.c, f.g, optimize=True)


def checkpoint_text(f: TwdFactors) -> str:
    """Serialize factors to the text checkpoint format.

    One header line "TWD v1 I J K R1 R2 R3 H1 H2 H3", then the flat
    contents of g, a, b, c row-major, whitespace-separated, with full
    round-trip float precision.
    """
    ni, nj, nk = f.dims
    head = " ".join([CHECKPOINT_MAGIC, str(ni), str(nj), str(nk),
                     *(str(x) for x in f.ranks.r), *(str(x) for x in f.ranks.h)])
    lines = [head]
    for arr in (f.g, f.a, f.b, f.c):
        flat = arr.ravel()
        for start in range(0, flat.size, 8):
            lines.append(" ".join(repr(float(v)) for v in flat[start:start + 8]))
    return "\n".join(lines) + "\n"


def save_checkpoint(f: TwdFactors, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(checkpoint_text(f))


def load_checkpoint(path) -> TwdFactors:
    """Parse a text checkpoint back into a TwdFactors."""
    with open(path, encoding="ascii") as fh:
        content = fh.read()
    lines = content.splitlines()
    if not lines:
        raise ParameterError(f"empty checkpoint file: {path}")
    head = lines[0].split()
    magic = " ".join(head[:2])
    if magic != CHECKPOINT_MAGIC or len(head) != 11:
        raise ParameterError(f"bad checkpoint header: {lines[0]!r}")
    ni, nj, nk, r1, r2, r3, h1, h2, h3 = (int(x) for x in head[2:])
    ranks = Ranks(r=(r1, r2, r3), h=(h1, h2, h3))
    values = np.array([float(t) for line in lines[1:] for t in line.split()])
    shapes = [(h1, h2, h3), (r3, ni, r1, h1), (r1, nj, r2, h2), (r2, nk, r3, h3)]
    expected = sum(int(np.prod(s)) for s in shapes)
    if values.size != expected:
        raise ParameterError(f"checkpoint holds {values.size} values, expected {expected}")
    arrays = []
    offset = 0
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(values[offset:offset + n].reshape(shape))
        offset += n
    g, a, b, c = arrays
    return TwdFactors(g, a, b, c, (ni, nj, nk), ranks)
