#!/usr/bin/env python3
"""Life of the encrypted KV cache: slot-aware appends, the compaction law,
and lazy noise refresh.

Appends rotate the incoming token to its block, mask it, and add it into
the newest cache ciphertext, so a fresh ciphertext opens only every B
tokens.  Refresh is the client-assisted mask/decrypt/re-encrypt round trip,
triggered only when a budget sinks to the threshold; here a stress cost
profile makes that happen quickly so you can watch it.
"""

import numpy as np

from cryptogen import BackendParams, new_context
from cryptogen.backend import NoiseCosts, default_plain_modulus
from cryptogen.encodings import decode, pack_token_inner
from cryptogen.kv_cache import append_token, cache_stats, init_cache, maybe_refresh
from cryptogen.nonlinear import MpcChannel

p = default_plain_modulus(16, 20)
ctx = new_context(BackendParams(n_slots=16, plain_modulus=p), seed=0)
d2 = 4

cache = init_cache(None, None, ctx, d2=d2)
print(f"B = ceil(n/d2) = {cache.B}")
for t in range(9):
    tok = pack_token_inner(np.full(d2, t + 1), ctx)
    cache = append_token(cache, tok, tok, ctx)
    s = cache_stats(cache)
    print(f"  append {t}: t_auto={s['t_auto']:2d} auto ciphertexts={s['auto_ct_count']}"
          f" (= ceil({s['t_auto']}/{cache.B}))")
print("decoded rows:", decode(cache.auto_K, ctx)[:, 0].tolist())

# stress profile: additions cost budget, so full blocks sink to the threshold
stress = BackendParams(
    n_slots=16, plain_modulus=p, noise_costs=NoiseCosts(add=15), initial_noise_budget=100
)
ctx = new_context(stress, seed=0)
ch = MpcChannel(p, seed=0)
cache = init_cache(None, None, ctx, d2=d2)
print(f"\nstress run (add costs 15 bits, threshold {stress.refresh_threshold}):")
for t in range(10):
    cache = maybe_refresh(cache, ctx, ch)
    tok = pack_token_inner(np.full(d2, t + 1), ctx)
    cache = append_token(cache, tok, tok, ctx)
    budgets = [part.noise_budget for part in cache.auto_K.parts]
    print(f"  step {t}: K budgets {budgets} refreshes so far {len(cache.refresh_log)}")

print("\nrefresh events (segment, part, budget before, bytes):")
for e in cache.refresh_log:
    print(f"  t={e.step} {e.segment}[{e.part_index}] budget={e.budget_before} bytes={e.mpc_bytes}")
print("channel moved", ch.bytes_sent, "bytes in", ch.rounds, "rounds")
assert (decode(cache.auto_K, ctx)[:, 0] == np.arange(1, 11)).all()
