"""Dense linear algebra over Z/p^W with numpy int64 arrays.

Moduli must stay below 2^31 so that products of two residues fit in int64.
Kernels and images are computed by elimination with minimal-valuation
pivoting, which gives saturated Z_p-lattices and reports the precision that
survives the divisions by pivot powers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PrecisionError

MAX_MODULUS = 2**31


def check_modulus(q: int) -> None:
    if q >= MAX_MODULUS:
        raise PrecisionError(f"modulus {q} too large for int64 arithmetic")


def as_mod(a, q: int) -> np.ndarray:
    return np.asarray(a, dtype=np.int64) % q


def valuation_array(a: np.ndarray, p: int, cap: int) -> np.ndarray:
    """Entrywise valuation, with cap for zero entries."""
    a = np.asarray(a, dtype=np.int64)
    v = np.zeros(a.shape, dtype=np.int64)
    x = a.copy()
    live = x != 0
    v[~live] = cap
    for _ in range(cap):
        div = live & (x % p == 0)
        if not div.any():
            break
        v[div] += 1
        x[div] //= p
        live = div
    return np.minimum(v, cap)


def content(a: np.ndarray, p: int, cap: int) -> int:
    a = np.asarray(a, dtype=np.int64)
    if a.size == 0 or not a.any():
        return cap
    return int(valuation_array(a[a != 0], p, cap).min())


def matmul_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Exact product modulo q via float64 BLAS on 16-bit limbs."""
    check_modulus(q)
    a = np.asarray(a, dtype=np.int64) % q
    b = np.asarray(b, dtype=np.int64) % q
    inner = a.shape[-1]
    if inner == 0:
        return np.zeros(a.shape[:-1] + b.shape[-1:], dtype=np.int64)
    if inner * (q - 1) ** 2 < 2**53:
        out = a.astype(np.float64) @ b.astype(np.float64)
        return out.astype(np.int64) % q
    shift = 1 << 16
    if inner * (q - 1) * (shift - 1) < 2**53:
        b1, b0 = np.divmod(b, shift)
        af = a.astype(np.float64)
        hi = (af @ b1.astype(np.float64)).astype(np.int64) % q
        lo = (af @ b0.astype(np.float64)).astype(np.int64) % q
        return (hi * shift + lo) % q
    a1, a0 = np.divmod(a, shift)
    b1, b0 = np.divmod(b, shift)
    a1, a0, b1, b0 = (x.astype(np.float64) for x in (a1, a0, b1, b0))
    s2 = shift * shift % q
    hh = (a1 @ b1).astype(np.int64) % q
    mid = ((a1 @ b0).astype(np.int64) + (a0 @ b1).astype(np.int64)) % q
    ll = (a0 @ b0).astype(np.int64) % q
    return (hh * s2 % q + mid * shift % q + ll) % q


def matpow_mod(a: np.ndarray, e: int, q: int) -> np.ndarray:
    result = np.eye(a.shape[0], dtype=np.int64)
    base = a % q
    while e:
        if e & 1:
            result = matmul_mod(result, base, q)
        e >>= 1
        if e:
            base = matmul_mod(base, base, q)
    return result


@dataclass
class Elimination:
    """Row echelon data for a matrix over Z/p^W.

    pivots lists (row position, column) in elimination order; valuations
    their p-adic valuations (non-decreasing).
    """

    reduced: np.ndarray
    pivot_cols: list[int]
    valuations: list[int]
    p: int
    W: int

    @property
    def rank(self) -> int:
        return len(self.pivot_cols)

    @property
    def max_valuation(self) -> int:
        return max(self.valuations, default=0)


def _unit_part_inverse(x: int, p: int, v: int, q: int) -> int:
    return pow(x // p**v, -1, q)


def eliminate(a: np.ndarray, p: int, W: int) -> Elimination:
    """Forward elimination with full minimal-valuation pivoting.

    Each pivot row is scaled so its pivot equals p^v exactly. Entries that
    become divisible by p^W are treated as zero.
    """
    q = p**W
    check_modulus(q)
    a = np.array(a, dtype=np.int64) % q
    nrows, ncols = a.shape
    pivot_cols: list[int] = []
    vals: list[int] = []
    col_alive = np.ones(ncols, dtype=bool)
    row = 0
    for v in range(W):
        pv = p**v
        mod_next = pv * p
        while row < nrows:
            sub = a[row:, col_alive]
            if not sub.any():
                break
            hits = np.argwhere((sub % mod_next) != 0)
            if hits.size == 0:
                break
            r_off, c_off = hits[0]
            cols = np.flatnonzero(col_alive)
            c = int(cols[c_off])
            r = row + int(r_off)
            if r != row:
                a[[row, r]] = a[[r, row]]
            piv = int(a[row, c])
            inv = _unit_part_inverse(piv, p, v, q)
            a[row] = a[row] * inv % q
            # rows below: entries in column c are divisible by p^v
            below = a[row + 1 :, c]
            nz = np.flatnonzero(below)
            if nz.size:
                mult = (below[nz] // pv) % q
                idx = row + 1 + nz
                a[idx] = (a[idx] - (mult[:, None] * a[row][None, :]) % q) % q
            pivot_cols.append(c)
            vals.append(v)
            col_alive[c] = False
            row += 1
    return Elimination(a[:row], pivot_cols, vals, p, W)


def kernel_basis(a: np.ndarray, p: int, W: int, with_free: bool = False):
    """Saturated basis of ker(a) over Z_p, as columns.

    Returns (basis mod p^W, number of reliable p-adic digits), plus the free
    columns if requested. Each basis vector is the standard unit vector on
    one free column completed on the pivot columns.
    """
    q = p**W
    ncols = a.shape[1]
    el = eliminate(a, p, W)
    pivots = el.pivot_cols
    free = [c for c in range(ncols) if c not in set(pivots)]
    k = len(free)
    basis = np.zeros((ncols, k), dtype=np.int64)
    if k == 0:
        return (basis, W - el.max_valuation, free) if with_free else (basis, W - el.max_valuation)
    basis[free, np.arange(k)] = 1
    red = el.reduced
    for i in range(len(pivots) - 1, -1, -1):
        c = pivots[i]
        v = el.valuations[i]
        rowvec = red[i]
        # rowvec . x = 0 with x[c] unknown and rowvec[c] = p^v
        rest = matmul_mod(rowvec[None, :], basis, q)[0]
        rest = (rest - rowvec[c] * basis[c]) % q
        num = (-rest) % q
        if v:
            num = (num // p**v) % q
        basis[c] = num
    if with_free:
        return basis % q, W - el.max_valuation, free
    return basis % q, W - el.max_valuation


def image_basis(a: np.ndarray, p: int, W: int) -> tuple[np.ndarray, int]:
    """Saturated basis of the Z_p-span of the columns of a (as columns)."""
    el = eliminate(np.asarray(a).T, p, W)
    q = p**W
    rows = el.reduced
    out = []
    for i, v in enumerate(el.valuations):
        r = rows[i]
        if v:
            r = (r // p**v) % q
        out.append(r)
    if not out:
        return np.zeros((a.shape[0], 0), dtype=np.int64), W
    return np.array(out, dtype=np.int64).T % q, W - el.max_valuation


def solve_coords(basis: np.ndarray, vectors: np.ndarray, p: int, W: int) -> np.ndarray:
    """Coordinates c with basis @ c = vectors, for a saturated basis."""
    r = basis.shape[1]
    return eliminate_rows_on(np.concatenate([basis, vectors], axis=1), r, p, W)


def eliminate_rows_on(aug: np.ndarray, r: int, p: int, W: int) -> np.ndarray:
    """Reduce [B | V] to read off solutions of B c = V (B saturated, full column rank)."""
    q = p**W
    a = np.array(aug, dtype=np.int64) % q
    n = a.shape[0]
    row = 0
    order = []
    for c in range(r):
        col = a[row:, c]
        units = np.flatnonzero(col % p)
        if units.size == 0:
            raise PrecisionError("basis is not saturated")
        pr = row + int(units[0])
        if pr != row:
            a[[row, pr]] = a[[pr, row]]
        inv = pow(int(a[row, c]), -1, q)
        a[row] = a[row] * inv % q
        others = np.flatnonzero(a[:, c])
        others = others[others != row]
        if others.size:
            mult = a[others, c]
            a[others] = (a[others] - (mult[:, None] * a[row][None, :]) % q) % q
        order.append(c)
        row += 1
    rest = a[r:, r:]
    if rest.any():
        raise PrecisionError("vectors do not lie in the span of the basis")
    return a[:r, r:]


def inverse_mod(a: np.ndarray, p: int, W: int) -> np.ndarray:
    n = a.shape[0]
    return eliminate_rows_on(np.concatenate([a, np.eye(n, dtype=np.int64)], axis=1), n, p, W)


def solve_linear(a: np.ndarray, b: np.ndarray, p: int, W: int) -> np.ndarray:
    """One solution x of a x = b modulo p^W (free unknowns set to 0).

    Raises UnsolvableError when b is not in the image of a modulo p^W.
    """
    from .errors import UnsolvableError

    q = p**W
    check_modulus(q)
    a = np.asarray(a, dtype=np.int64) % q
    b = np.asarray(b, dtype=np.int64).reshape(a.shape[0], -1) % q
    nrows, ncols = a.shape
    aug = np.concatenate([a, b], axis=1)
    pivots: list[tuple[int, int]] = []
    alive = np.ones(ncols, dtype=bool)
    row = 0
    for v in range(W):
        pv = p**v
        while row < nrows:
            sub = aug[row:, :ncols][:, alive]
            hits = np.argwhere((sub % (pv * p)) != 0)
            if hits.size == 0:
                break
            r_off, c_off = hits[0]
            c = int(np.flatnonzero(alive)[c_off])
            r = row + int(r_off)
            if r != row:
                aug[[row, r]] = aug[[r, row]]
            inv = pow(int(aug[row, c]) // pv, -1, q)
            aug[row] = aug[row] * inv % q
            below = aug[row + 1 :, c]
            nz = np.flatnonzero(below)
            if nz.size:
                mult = (below[nz] // pv) % q
                idx = row + 1 + nz
                aug[idx] = (aug[idx] - (mult[:, None] * aug[row][None, :]) % q) % q
            pivots.append((c, v))
            alive[c] = False
            row += 1
    if aug[row:, ncols:].any():
        raise UnsolvableError("right-hand side is not in the image")
    x = np.zeros((ncols, b.shape[1]), dtype=np.int64)
    for i in range(len(pivots) - 1, -1, -1):
        c, v = pivots[i]
        rest = (aug[i, ncols:] - matmul_mod(aug[i : i + 1, :ncols], x, q)[0] + aug[i, c] * x[c]) % q
        if v:
            if (rest % p**v).any():
                raise UnsolvableError("right-hand side is not in the image")
            rest = rest // p**v
        x[c] = rest % q
    return x
