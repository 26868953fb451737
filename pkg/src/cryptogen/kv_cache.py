"""Heterogeneous encrypted KV cache.

The prefill segment keeps keys/values outer-packed (one feature column per
ciphertext); generated tokens are appended into compacted inner-packed
ciphertexts holding B = ceil(n/d2) tokens each.  Appends are slot-aware:
the incoming token is rotated to its block, masked, and added, so a fresh
ciphertext is opened only every B tokens.

Noise is handled lazily: before each decode step, any part whose budget has
fallen to the refresh threshold makes a masked round trip through the
client role (subtract random r, decrypt, re-encrypt, add r back), which
restores a full budget without revealing the payload.

Cache values are immutable; append and refresh return new cache objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backend import Context, ParameterError, SlotCiphertext
from .encodings import (
    Encoding,
    EncodingKind,
    PackedMatrix,
    block_capacity,
    load_matrix,
    save_matrix,
)
from .nonlinear import MpcChannel

__all__ = [
    "KVCache",
    "RefreshEvent",
    "append_token",
    "cache_stats",
    "init_cache",
    "load_cache",
    "maybe_refresh",
    "save_cache",
]


@dataclass(frozen=True)
class RefreshEvent:
    step: int
    segment: str  # "prefill_K" | "prefill_V" | "auto_K" | "auto_V"
    part_index: int
    part_id: int
    budget_before: int
    mpc_bytes: int
    forced: bool = False


@dataclass(frozen=True)
class KVCache:
    d2: int
    B: int
    m: int
    t_auto: int
    prefill_K: PackedMatrix | None
    prefill_V: PackedMatrix | None
    auto_K: PackedMatrix
    auto_V: PackedMatrix
    refresh_log: tuple = field(default_factory=tuple)

    def segments(self):
        pairs = []
        if self.prefill_K is not None:
            pairs.append(("prefill_K", self.prefill_K))
            pairs.append(("prefill_V", self.prefill_V))
        pairs.append(("auto_K", self.auto_K))
        pairs.append(("auto_V", self.auto_V))
        return pairs


def _empty_auto(d2: int, B: int) -> PackedMatrix:
    enc = Encoding(EncodingKind.INNER_COMPACTED, 0, d2, block=B)
    return PackedMatrix(enc, [], encrypted=True)


def init_cache(
    K_pref: PackedMatrix | None,
    V_pref: PackedMatrix | None,
    ctx: Context,
    d2: int | None = None,
) -> KVCache:
    """Start a cache from outer-packed prefill projections (or empty)."""
    if (K_pref is None) != (V_pref is None):
        raise ParameterError("prefill K and V must both be present or both absent")
    if K_pref is not None:
        if K_pref.encoding.kind is not EncodingKind.OUTER or not K_pref.encrypted:
            raise ParameterError("prefill segments must be encrypted outer packings")
        if K_pref.encoding != V_pref.encoding:
            raise ParameterError(
                f"prefill K {K_pref.encoding} and V {V_pref.encoding} disagree"
            )
        m, d2_eff = K_pref.encoding.rows, K_pref.encoding.cols
        if d2 is not None and d2 != d2_eff:
            raise ParameterError(f"d2 {d2} does not match prefill width {d2_eff}")
        d2 = d2_eff
    else:
        if d2 is None:
            raise ParameterError("an empty cache needs an explicit d2")
        m = 0
    B = block_capacity(ctx.params.n_slots, d2)
    return KVCache(d2, B, m, 0, K_pref, V_pref, _empty_auto(d2, B), _empty_auto(d2, B))


def _append_one(
    seg: PackedMatrix, token: SlotCiphertext, pos: int, mask, ctx: Context, fresh: bool
) -> PackedMatrix:
    rotated = ctx.rotate(token, -pos) if pos else token
    ct_new = ctx.mult_plain(rotated, mask)
    parts = list(seg.parts)
    if fresh:
        parts.append(ctx.add(ctx.encrypt(ctx.zeros()), ct_new))
    else:
        parts[-1] = ctx.add(parts[-1], ct_new)
    enc = replace(seg.encoding, rows=seg.encoding.rows + 1)
    return PackedMatrix(enc, parts, encrypted=True)


def append_token(
    cache: KVCache, k_new: SlotCiphertext, v_new: SlotCiphertext, ctx: Context
) -> KVCache:
    """Write one generated token at slot offset (t_auto mod B) * d2.

    Exactly 2 mult_plain + 2 add (K and V); one rotation each when the
    offset is nonzero; a fresh ciphertext opens only when t_auto mod B = 0.
    """
    b = cache.t_auto % cache.B
    pos = b * cache.d2
    fresh = b == 0
    mask = np.zeros(ctx.params.n_slots, dtype=np.int64)
    mask[pos : pos + cache.d2] = 1
    auto_K = _append_one(cache.auto_K, k_new, pos, mask, ctx, fresh)
    auto_V = _append_one(cache.auto_V, v_new, pos, mask, ctx, fresh)
    return replace(cache, t_auto=cache.t_auto + 1, auto_K=auto_K, auto_V=auto_V)


def _refresh_part(part: SlotCiphertext, ctx: Context, ch: MpcChannel) -> SlotCiphertext:
    p = ctx.params.plain_modulus
    r = ch.sample_mask(ctx.params.n_slots)
    masked = ctx.add_plain(part, (p - r) % p)
    client_view = ctx.decrypt(masked)
    fresh = ctx.encrypt(client_view)
    ch.transfer("refresh", ctx.params.n_slots, trips=2)
    return ctx.add_plain(fresh, r)


def maybe_refresh(
    cache: KVCache, ctx: Context, ch: MpcChannel, force: bool = False
) -> KVCache:
    """Round-trip every part at or below the refresh threshold (all parts
    when forced).  Decoded values are unchanged; budgets reset to full."""
    threshold = ctx.params.refresh_threshold
    new_segments = {}
    events = []
    for name, seg in cache.segments():
        parts = list(seg.parts)
        changed = False
        for i, part in enumerate(parts):
            if force or part.noise_budget <= threshold:
                events.append(
                    RefreshEvent(
                        step=cache.t_auto,
                        segment=name,
                        part_index=i,
                        part_id=part.id,
                        budget_before=part.noise_budget,
                        mpc_bytes=2 * ctx.params.ciphertext_bytes(),
                        forced=force and part.noise_budget > threshold,
                    )
                )
                parts[i] = _refresh_part(part, ctx, ch)
                ctx.counter.refresh_events += 1
                changed = True
        if changed:
            new_segments[name] = PackedMatrix(
                seg.encoding, parts, encrypted=True, slot_period=seg.slot_period
            )
    if not new_segments:
        return cache
    return replace(
        cache,
        prefill_K=new_segments.get("prefill_K", cache.prefill_K),
        prefill_V=new_segments.get("prefill_V", cache.prefill_V),
        auto_K=new_segments.get("auto_K", cache.auto_K),
        auto_V=new_segments.get("auto_V", cache.auto_V),
        refresh_log=cache.refresh_log + tuple(events),
    )


def cache_stats(cache: KVCache) -> dict:
    """Per-side ciphertext counts and bookkeeping totals (K side; V mirrors)."""
    prefill_cts = len(cache.prefill_K.parts) if cache.prefill_K is not None else 0
    return {
        "ct_count": prefill_cts + len(cache.auto_K.parts),
        "prefill_ct_count": prefill_cts,
        "auto_ct_count": len(cache.auto_K.parts),
        "m": cache.m,
        "t_auto": cache.t_auto,
        "B": cache.B,
        "refresh_count": len(cache.refresh_log),
        "refresh_bytes": sum(e.mpc_bytes for e in cache.refresh_log),
    }


# ----------------------------------------------------------------------
# checkpointing
# ----------------------------------------------------------------------


def save_cache(cache: KVCache, path, ctx: Context) -> None:
    """Snapshot parts (binary matrix format) plus a JSON manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "d2": cache.d2,
        "B": cache.B,
        "m": cache.m,
        "t_auto": cache.t_auto,
        "n_slots": ctx.params.n_slots,
        "p": ctx.params.plain_modulus,
        "segments": {},
        "refresh_log": [vars(e) for e in cache.refresh_log],
    }
    for name, seg in cache.segments():
        budgets = []
        for i, part in enumerate(seg.parts):
            save_matrix(
                path / f"{name}_{i}.bin",
                ctx.decrypt(part).reshape(1, -1),
                ctx.params.plain_modulus,
            )
            budgets.append(part.noise_budget)
        manifest["segments"][name] = {
            "rows": seg.encoding.rows,
            "parts": len(seg.parts),
            "budgets": budgets,
            "slot_period": seg.slot_period,
        }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_cache(path, ctx: Context) -> KVCache:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest["n_slots"] != ctx.params.n_slots or manifest["p"] != ctx.params.plain_modulus:
        raise ParameterError("cache snapshot was taken under different parameters")
    d2, B = manifest["d2"], manifest["B"]

    def load_segment(name: str, kind: EncodingKind, block: int | None) -> PackedMatrix | None:
        meta = manifest["segments"].get(name)
        if meta is None:
            return None
        parts = []
        for i, budget in enumerate(meta["budgets"]):
            vals, _ = load_matrix(path / f"{name}_{i}.bin")
            parts.append(ctx.load_ciphertext(vals[0], budget))
        enc = Encoding(kind, meta["rows"], d2, block=block)
        return PackedMatrix(enc, parts, encrypted=True, slot_period=meta.get("slot_period"))

    has_prefill = "prefill_K" in manifest["segments"]
    cache = KVCache(
        d2=d2,
        B=B,
        m=manifest["m"],
        t_auto=manifest["t_auto"],
        prefill_K=load_segment("prefill_K", EncodingKind.OUTER, None) if has_prefill else None,
        prefill_V=load_segment("prefill_V", EncodingKind.OUTER, None) if has_prefill else None,
        auto_K=load_segment("auto_K", EncodingKind.INNER_COMPACTED, B),
        auto_V=load_segment("auto_V", EncodingKind.INNER_COMPACTED, B),
        refresh_log=tuple(RefreshEvent(**e) for e in manifest["refresh_log"]),
    )
    return cache
