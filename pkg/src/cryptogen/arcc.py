"""Ciphertext-ciphertext attention kernels over the heterogeneous cache.

Two complementary modes:

  inner-inner   scalar-broadcast accumulation: each coefficient slot is
                masked out, rotated to slot 0, duplicated across the slot
                range, and multiplied against one stored vector.  Used for
                query x prefill-keys and weights x generated-values (where
                the stored rows act as the columns of the transpose).

  inner-outer   dot-product folding reduction: one SIMD multiplication per
                stored ciphertext followed by a log-depth rotate-and-add
                fold.  Used for query x generated-keys and weights x
                prefill-values.

Slot reductions and broadcasts inside the decode path always run at full
slot width so per-step rotation counts do not depend on the prefill length.

Softmax, the 1/sqrt(d2) scaling, and the causal mask all run in the
MPC-emulation domain on shares; score segments are concatenated there as
well (client-side reassembly), never by ciphertext slot surgery.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .backend import Context, ParameterError, SlotCiphertext
from .encodings import EncodingKind, PackedMatrix, next_pow2, tile_token
from .fixedpoint import FixedPointParams, attention_weights, causal_attention_weights
from .kv_cache import KVCache
from .linear_kernels import fold_sum
from .nonlinear import (
    MpcChannel,
    he_to_shares,
    reconstruct,
    share_vector,
    shares_to_he,
    truncate,
)

__all__ = [
    "ScoreLayout",
    "ScoreVector",
    "arcc_inner_inner",
    "arcc_inner_outer",
    "attention_step",
    "broadcast_slot",
    "compact_scores",
    "prefill_attention",
]


class ScoreLayout(Enum):
    PREFILL_ALIGNED = "prefill_aligned"  # scores contiguous in slots 0..len-1
    BLOCK_ALIGNED = "block_aligned"  # one score at the start of each block


@dataclass
class ScoreVector:
    parts: list
    valid_len: int
    layout: ScoreLayout
    block: int | None = None  # block width, BLOCK_ALIGNED only

    @property
    def ct(self) -> SlotCiphertext:
        return self.parts[0]


def _one_hot(ctx: Context, slot: int) -> np.ndarray:
    v = np.zeros(ctx.params.n_slots, dtype=np.int64)
    v[slot] = 1
    return v


def broadcast_slot(
    a: SlotCiphertext, j: int, width: int, ctx: Context
) -> SlotCiphertext:
    """Copy slot j into slots 0..width-1: one-hot mask, rotate to slot 0,
    then ceil(log2 width) rotate-and-add duplications (1 + ceil(log2 width)
    rotations total; the doublings may overfill up to next_pow2(width))."""
    n = ctx.params.n_slots
    if not 0 <= j < n or not 1 <= width <= n:
        raise ParameterError(f"slot {j} / width {width} out of range for {n} slots")
    out = ctx.rotate(ctx.mult_plain(a, _one_hot(ctx, j)), j)
    filled = 1
    while filled < width:
        out = ctx.add(out, ctx.rotate(out, -filled))
        filled *= 2
    return out


def arcc_inner_inner(
    coeffs: SlotCiphertext, basis: PackedMatrix, ctx: Context
) -> ScoreVector:
    """Weighted sum of stored vectors: sum_j coeffs[j] * vector_j.

    With an outer-packed basis the stored vectors are its columns (one
    ciphertext each: L broadcasts, L CTxCT mults).  With an inner-packed or
    compacted basis the stored rows act as the columns of the transpose;
    the compacted path relayouts the coefficients blockwise and spends one
    CTxCT mult per cache ciphertext.
    """
    n = ctx.params.n_slots
    kind = basis.encoding.kind
    if not basis.encrypted:
        raise ParameterError("inner-inner basis must be encrypted")

    if kind is EncodingKind.OUTER:
        acc = None
        for j, part in enumerate(basis.parts):
            b = broadcast_slot(coeffs, j, n, ctx)
            prod = ctx.mult_cipher(b, part)
            acc = prod if acc is None else ctx.add(acc, prod)
        if acc is None:
            raise ParameterError("empty basis")
        return ScoreVector([acc], basis.encoding.rows, ScoreLayout.PREFILL_ALIGNED)

    if kind in (EncodingKind.INNER, EncodingKind.INNER_COMPACTED):
        d = basis.encoding.cols
        rows = basis.encoding.rows
        if rows == 0:
            raise ParameterError("empty basis")
        if kind is EncodingKind.INNER:
            acc = None
            for r, part in enumerate(basis.parts):
                b = broadcast_slot(coeffs, r, n, ctx)
                prod = ctx.mult_cipher(b, part)
                acc = prod if acc is None else ctx.add(acc, prod)
            return ScoreVector([acc], d, ScoreLayout.PREFILL_ALIGNED)
        B = basis.encoding.block
        acc = None
        for q, part in enumerate(basis.parts):
            cq = None
            for b in range(min(B, rows - q * B)):
                piece = broadcast_slot(coeffs, q * B + b, d, ctx)
                if b:
                    piece = ctx.rotate(piece, -(b * d))
                cq = piece if cq is None else ctx.add(cq, piece)
            prod = ctx.mult_cipher(cq, part)
            acc = prod if acc is None else ctx.add(acc, prod)
        step = d
        while step < n:
            acc = ctx.add(acc, ctx.rotate(acc, step))
            step *= 2
        return ScoreVector([acc], d, ScoreLayout.PREFILL_ALIGNED)

    raise ParameterError(f"inner-inner does not accept a {kind} basis")


def arcc_inner_outer(
    v: SlotCiphertext, rows: PackedMatrix, ctx: Context
) -> ScoreVector:
    """Per-row dot products <v, row_r>, one score per block boundary.

    Compacted rows take one SIMD multiplication per cache ciphertext (after
    tiling v across the blocks) plus a log2(d) fold; plain inner rows take
    one multiplication each, with the scores masked into block positions.
    """
    n = ctx.params.n_slots
    kind = rows.encoding.kind
    if not rows.encrypted:
        raise ParameterError("inner-outer rows must be encrypted")
    if rows.encoding.rows == 0:
        raise ParameterError("empty row set")
    d = rows.encoding.cols

    if kind is EncodingKind.INNER_COMPACTED:
        B = rows.encoding.block
        vt = tile_token(v, d, B, ctx)
        parts = [fold_sum(ctx.mult_cipher(vt, part), d, ctx) for part in rows.parts]
        return ScoreVector(parts, rows.encoding.rows, ScoreLayout.BLOCK_ALIGNED, block=d)

    if kind is EncodingKind.INNER:
        w = next_pow2(d)
        per_ct = n // w
        parts: list = []
        acc = None
        for r, row_ct in enumerate(rows.parts):
            dot = fold_sum(ctx.mult_cipher(v, row_ct), w, ctx)
            placed = ctx.mult_plain(dot, _one_hot(ctx, 0))
            b = r % per_ct
            if b:
                placed = ctx.rotate(placed, -(b * w))
            acc = placed if acc is None else ctx.add(acc, placed)
            if b == per_ct - 1 or r == len(rows.parts) - 1:
                parts.append(acc)
                acc = None
        return ScoreVector(parts, rows.encoding.rows, ScoreLayout.BLOCK_ALIGNED, block=w)

    raise ParameterError(f"inner-outer does not accept a {kind} row set")


def compact_scores(s: ScoreVector, ctx: Context) -> ScoreVector:
    """Realign block-boundary scores into contiguous slots 0..valid_len-1."""
    if s.layout is not ScoreLayout.BLOCK_ALIGNED:
        raise ParameterError("compact_scores expects a block-aligned input")
    n = ctx.params.n_slots
    if s.valid_len > n:
        raise ParameterError("too many scores for one ciphertext")
    per_ct = n // s.block
    acc = None
    for r in range(s.valid_len):
        q, b = divmod(r, per_ct)
        src = b * s.block
        piece = ctx.mult_plain(s.parts[q], _one_hot(ctx, src))
        if src != r:
            piece = ctx.rotate(piece, src - r)
        acc = piece if acc is None else ctx.add(acc, piece)
    return ScoreVector([acc], s.valid_len, ScoreLayout.PREFILL_ALIGNED)


# ----------------------------------------------------------------------
# attention
# ----------------------------------------------------------------------


def _dot_into_slot(
    weights_ct: SlotCiphertext,
    column_ct: SlotCiphertext,
    slot: int,
    ctx: Context,
) -> SlotCiphertext:
    """<weights, column> placed at one slot: SIMD mult, full fold, mask."""
    prod = ctx.mult_cipher(weights_ct, column_ct)
    total = fold_sum(prod, ctx.params.n_slots, ctx)
    return ctx.mult_plain(total, _one_hot(ctx, slot))


def _column_period(
    P: PackedMatrix, idx: int, period: int, ctx: Context
) -> SlotCiphertext:
    """A column ciphertext tiled to the given cyclic period."""
    col = P.parts[idx]
    if P.slot_period == period:
        return col
    if P.slot_period is None:
        return tile_token(col, period, ctx.params.n_slots // period, ctx)
    raise ParameterError(
        f"column padding period {P.slot_period} incompatible with {period}"
    )


def prefill_attention(
    Q: PackedMatrix,
    K: PackedMatrix,
    V: PackedMatrix,
    fp: FixedPointParams,
    ctx: Context,
    mpc: MpcChannel,
    causal: bool = True,
) -> PackedMatrix:
    """Batched attention over outer-packed projections.

    Score diagonals come from outer-outer CTxCT products against rotated
    key columns; softmax (with the additive causal mask) runs on shares;
    the weight rows return encrypted and aggregate the values with
    dot-product reductions.  Output is outer-packed at scale f.
    """
    for name, P in (("Q", Q), ("K", K), ("V", V)):
        if P.encoding.kind is not EncodingKind.OUTER or not P.encrypted:
            raise ParameterError(f"{name} must be an encrypted outer packing")
    if not (Q.encoding == K.encoding == V.encoding):
        raise ParameterError("Q, K, V disagree on dimensions")
    m, d2 = Q.encoding.rows, Q.encoding.cols
    n = ctx.params.n_slots
    w = next_pow2(m)

    k_cols = [_column_period(K, c, w, ctx) for c in range(d2)]

    diag_shares = []
    for r in range(w):
        acc = None
        for c in range(d2):
            kr = ctx.rotate(k_cols[c], r) if r else k_cols[c]
            prod = ctx.mult_cipher(Q.parts[c], kr)
            acc = prod if acc is None else ctx.add(acc, prod)
        diag_shares.append(he_to_shares(acc, ctx, mpc, length=m))

    # client role: reassemble the score matrix from its diagonals
    S = np.zeros((m, m), dtype=np.int64)
    for r, sp in enumerate(diag_shares):
        vals = reconstruct(sp)
        for i in range(m):
            j = (i + r) % w
            if j < m:
                S[i, j] = vals[i]

    A = np.zeros((m, m), dtype=np.int64)
    for i in range(m):
        row = S[i]
        A[i] = (
            causal_attention_weights(row, i, d2, fp)
            if causal
            else attention_weights(row, d2, fp)
        )
    mpc.transfer("prefill_softmax", m * m, trips=3 + fp.reciprocal_iters)

    a_rows = [
        shares_to_he(share_vector(A[i], mpc), ctx, mpc) for i in range(m)
    ]

    out_parts = []
    for c in range(d2):
        acc = None
        for i in range(m):
            piece = _dot_into_slot(a_rows[i], V.parts[c], i, ctx)
            acc = piece if acc is None else ctx.add(acc, piece)
        sp = truncate(he_to_shares(acc, ctx, mpc, length=m), fp, mpc)
        out_parts.append(shares_to_he(sp, ctx, mpc))

    enc = Q.encoding
    return PackedMatrix(enc, out_parts, encrypted=True, slot_period=None)


def attention_step(
    q: SlotCiphertext,
    cache: KVCache,
    fp: FixedPointParams,
    ctx: Context,
    mpc: MpcChannel,
) -> SlotCiphertext:
    """One decode-step attention over the heterogeneous cache.

    Prefill scores via inner-inner broadcasts, generated scores via
    inner-outer folding; segments concatenate in the share domain, softmax
    runs there, and the weights return split per segment for value
    aggregation.  Output is inner-packed, length d2, scale f.
    """
    m, t, d2, B = cache.m, cache.t_auto, cache.d2, cache.B
    n = ctx.params.n_slots
    if m + t == 0:
        raise ParameterError("attention over an empty cache")

    pieces = []
    if m > 0:
        sv = arcc_inner_inner(q, cache.prefill_K, ctx)
        pieces.append(reconstruct(he_to_shares(sv.ct, ctx, mpc, length=m)))
    if t > 0:
        sv = arcc_inner_outer(q, cache.auto_K, ctx)
        for qi, part in enumerate(sv.parts):
            vals = reconstruct(he_to_shares(part, ctx, mpc))
            rows_here = min(B, t - qi * B)
            pieces.append(vals[np.arange(rows_here) * d2])
    scores_2f = np.concatenate(pieces)

    a = attention_weights(scores_2f, d2, fp)
    mpc.transfer("decode_softmax", m + t, trips=3 + fp.reciprocal_iters)

    o = None
    if m > 0:
        a_pref = shares_to_he(share_vector(a[:m], mpc), ctx, mpc)
        acc = None
        for c in range(d2):
            piece = _dot_into_slot(a_pref, cache.prefill_V.parts[c], c, ctx)
            acc = piece if acc is None else ctx.add(acc, piece)
        o = acc
    if t > 0:
        acc = None
        for qi, part in enumerate(cache.auto_V.parts):
            rows_here = min(B, t - qi * B)
            dup = np.repeat(a[m + qi * B : m + qi * B + rows_here], d2)
            coeff = np.zeros(n, dtype=np.int64)
            coeff[: rows_here * d2] = dup
            coeff_ct = shares_to_he(share_vector(coeff, mpc), ctx, mpc)
            prod = ctx.mult_cipher(coeff_ct, part)
            acc = prod if acc is None else ctx.add(acc, prod)
        step = d2
        while step < n:
            acc = ctx.add(acc, ctx.rotate(acc, step))
            step *= 2
        o = acc if o is None else ctx.add(o, acc)

    sp = truncate(he_to_shares(o, ctx, mpc, length=d2), fp, mpc)
    return shares_to_he(sp, ctx, mpc)
