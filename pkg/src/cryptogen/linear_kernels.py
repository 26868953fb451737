"""CT x PT linear layers: batch CPMM for prefilling, per-token CPVM for
decoding, and the rotate-and-accumulate folding sum they share.

Both kernels consume plaintext weights in the row-first diagonal layout and
an encrypted activation operand.  The CPMM internally stacks
floor(n / next_pow2(m)) activation columns into each working ciphertext so
its plaintext-multiplication count follows m*d1*d2/n; its outputs carry
cyclic-copy padding with period next_pow2(m) (see ``PackedMatrix.slot_period``).
"""

from __future__ import annotations

import numpy as np

from .backend import Context, ParameterError, SlotCiphertext
from .encodings import (
    Encoding,
    EncodingKind,
    PackedMatrix,
    decode,
    next_pow2,
)

__all__ = ["cpmm_outer_diagonal", "cpvm_inner_diagonal", "fold_sum"]


def fold_sum(a: SlotCiphertext, block: int, ctx: Context) -> SlotCiphertext:
    """Sum every contiguous `block`-wide block into its first slot.

    log2(block) rotations and log2(block) additions; block must be a power
    of two dividing the slot count.  Slot i ends up holding the cyclic sum
    a[i] + ... + a[i+block-1]; only block-start slots are meaningful.
    """
    n = ctx.params.n_slots
    if block < 1 or block > n or block & (block - 1) or n % block:
        raise ParameterError(f"block {block} must be a power of two dividing {n}")
    out = a
    step = 1
    while step < block:
        out = ctx.add(out, ctx.rotate(out, step))
        step *= 2
    return out


def _diagonal_weights(W: PackedMatrix, ctx: Context) -> np.ndarray:
    if W.encrypted or W.encoding.kind is not EncodingKind.DIAGONAL:
        raise ParameterError("weights must be a plaintext diagonal PackedMatrix")
    return decode(W, ctx)


def cpmm_outer_diagonal(
    X: PackedMatrix, W: PackedMatrix, ctx: Context
) -> PackedMatrix:
    """Prefill matrix product: outer-packed X (m x d1) times diagonal
    plaintext W (d1 x d2), returning outer-packed X.W (m x d2).

    Column ciphertexts are stacked floor(n/next_pow2(m)) to a working
    ciphertext, each working ciphertext is multiplied by one per-output-
    column plaintext, and the stacked blocks are folded back onto block 0.
    Output columns are replicated with period next_pow2(m).
    """
    if X.encoding.kind is not EncodingKind.OUTER or not X.encrypted:
        raise ParameterError("cpmm expects an encrypted outer-packed activation")
    if X.slot_period is not None:
        raise ParameterError("cpmm expects zero-padded input columns")
    Wv = _diagonal_weights(W, ctx)
    m, d1 = X.encoding.rows, X.encoding.cols
    if d1 != W.encoding.rows:
        raise ParameterError(
            f"dimension mismatch: X is {m}x{d1}, W is "
            f"{W.encoding.rows}x{W.encoding.cols}"
        )
    d2 = W.encoding.cols
    n = ctx.params.n_slots
    w = next_pow2(m)
    if w > n:
        raise ParameterError(f"{m} rows do not fit {n} slots")
    group = n // w  # columns stacked per working ciphertext

    work = []
    for g in range(0, d1, group):
        acc = X.parts[g]
        for u in range(1, min(group, d1 - g)):
            acc = ctx.add(acc, ctx.rotate(X.parts[g + u], -(u * w)))
        work.append((g, acc))

    fold_steps = (group).bit_length() - 1
    parts = []
    for c in range(d2):
        acc_c = None
        for g, wct in work:
            pt = np.zeros(n, dtype=np.int64)
            for u in range(min(group, d1 - g)):
                pt[u * w : u * w + m] = Wv[g + u, c]
            prod = ctx.mult_plain(wct, pt)
            for s in range(fold_steps):
                prod = ctx.add(prod, ctx.rotate(prod, w << s))
            acc_c = prod if acc_c is None else ctx.add(acc_c, prod)
        parts.append(acc_c)

    enc = Encoding(EncodingKind.OUTER, m, d2)
    return PackedMatrix(enc, parts, encrypted=True, slot_period=w)


def cpvm_inner_diagonal(
    x: SlotCiphertext, W: PackedMatrix, ctx: Context
) -> SlotCiphertext:
    """Decode-phase vector product: inner-packed x (length d1) times
    diagonal plaintext W (d1 x d2), returning x.W in slots 0..d2-1.

    Halevi-Shoup style evaluation over generalized diagonals of period
    wp = max(next_pow2(d1), next_pow2(d2)) with a single cyclic extension
    of x, next_pow2(d2) plaintext multiplications, and a log-depth fold.
    Cost is independent of any prefix length; slots beyond next_pow2(d2)
    may hold fold residue.
    """
    Wv = _diagonal_weights(W, ctx)
    d1, d2 = W.encoding.rows, W.encoding.cols
    n = ctx.params.n_slots
    wd1, wd2 = next_pow2(d1), next_pow2(d2)
    wp = max(wd1, wd2)
    if wp > n:
        raise ParameterError(f"operand width {wp} exceeds {n} slots")

    x_ext = x if wp == n else ctx.add(x, ctx.rotate(x, -wp))

    j = np.arange(wp)
    col = j % wd2
    acc = None
    for k in range(wd2):
        row = (j + k) % wp
        pt = np.zeros(n, dtype=np.int64)
        valid = (row < d1) & (col < d2)
        pt[:wp][valid] = Wv[row[valid], col[valid]]
        xr = x_ext if k == 0 else ctx.rotate(x_ext, k)
        prod = ctx.mult_plain(xr, pt)
        acc = prod if acc is None else ctx.add(acc, prod)

    steps = (wp // wd2).bit_length() - 1
    for s in range(steps):
        acc = ctx.add(acc, ctx.rotate(acc, wd2 << s))
    return acc
