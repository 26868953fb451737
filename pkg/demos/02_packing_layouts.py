#!/usr/bin/env python3
"""The four packing layouts, side by side.

outer            one column per ciphertext  (batch-parallel prefilling)
inner            one row per ciphertext     (token-at-a-time decoding)
diagonal         row-first wrapped diagonals (plaintext weights)
inner_compacted  rows packed B = n/d per ciphertext (the generated cache)

Also shows the bit-exact matrix file format used for weights and cache
snapshots.
"""

import tempfile
from pathlib import Path

import numpy as np

from cryptogen import BackendParams, EncodingKind, decode, encode, new_context
from cryptogen.encodings import load_matrix, save_matrix

ctx = new_context(BackendParams(n_slots=8, plain_modulus=17), seed=0)
A = np.array([[1, 2], [3, 4], [5, 6]])
print("matrix:\n", A)

for kind in EncodingKind:
    P = encode(A, kind, ctx, encrypted=False)
    print(f"\n{kind.value}: {len(P.parts)} ciphertext(s)")
    for i, part in enumerate(P.parts):
        print(f"  part {i}: {part.tolist()}")
    assert (decode(P, ctx) == A).all()

# diagonal k holds A[i, (i+k) mod d] for every row i: the layout that lets a
# vector-matrix product run as rotate / multiply / accumulate
P = encode(A, EncodingKind.DIAGONAL, ctx, encrypted=False)
for k in range(2):
    want = [A[i, (i + k) % 2] for i in range(3)]
    assert P.parts[k][:3].tolist() == want

# compacted rows: ceil(r/B) ciphertexts hold r rows
B = 8 // 2
for r in (1, 3, 4, 5):
    M = np.arange(2 * r).reshape(r, 2)
    packed = encode(M, EncodingKind.INNER_COMPACTED, ctx)
    print(f"rows={r}: B={B} -> {len(packed.parts)} cache ciphertext(s)")

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "weights.bin"
    save_matrix(path, A, p=17)
    back, p = load_matrix(path)
    print(f"\nbinary roundtrip: p={p}, header+payload = {path.stat().st_size} bytes")
    assert (back == A).all()
