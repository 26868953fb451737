"""Toy decoder-only transformer wired through every kernel, plus the
plaintext fixed-point oracle it is verified against.

Weights are stored as signed scale-f integers, so a model is independent of
the backend modulus; quantization happens once at generation time.  The
encrypted pipeline and the oracle share the arithmetic in ``fixedpoint``
(one implementation of truncation, GELU, softmax, layernorm), which is what
makes token-exact equivalence checkable.

Decoding is greedy; the argmax runs client-side on decrypted logits.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arcc import attention_step, prefill_attention
from .backend import Context, ParameterError
from .encodings import EncodingKind, PackedMatrix, encode, load_matrix, save_matrix
from .fixedpoint import (
    FixedPointParams,
    attention_weights,
    causal_attention_weights,
    fp_gelu,
    fp_layernorm,
    fp_truncate,
    to_signed,
)
from .kv_cache import append_token, cache_stats, init_cache, maybe_refresh
from .linear_kernels import cpmm_outer_diagonal, cpvm_inner_diagonal
from .nonlinear import (
    MpcChannel,
    he_to_shares,
    reconstruct,
    share_vector,
    shares_to_he,
    truncate,
)

__all__ = [
    "GenerationState",
    "Model",
    "ModelConfig",
    "bolt_reference_generate",
    "decode_step",
    "generate",
    "generate_toy_model",
    "load_model",
    "oracle_generate",
    "prefill",
    "save_model",
    "toy_config",
]


@dataclass(frozen=True)
class ModelConfig:
    layers: int
    d1: int
    heads: int
    ffn_dim: int
    vocab: int
    max_seq: int
    f: int = 8  # fraction bits of the fixed-point embedding

    def __post_init__(self):
        if min(self.layers, self.d1, self.heads, self.ffn_dim, self.vocab, self.max_seq) < 1:
            raise ParameterError("all model dimensions must be positive")
        if self.d1 % self.heads:
            raise ParameterError(f"d1 ={self.d1} must be divisible by heads ={self.heads}")

    @property
    def d2(self) -> int:
        return self.d1 // self.heads

    def as_dict(self) -> dict:
        return {
            "layers": self.layers,
            "d1": self.d1,
            "heads": self.heads,
            "ffn_dim": self.ffn_dim,
            "vocab": self.vocab,
            "max_seq": self.max_seq,
            "f": self.f,
        }


def toy_config() -> ModelConfig:
    """The bundled toy fixture: 2 layers, d1=32, 4 heads, vocab 64."""
    return ModelConfig(layers=2, d1=32, heads=4, ffn_dim=64, vocab=64, max_seq=160, f=8)


_LAYER_MATS = ("wq", "wk", "wv", "wo", "w1", "w2")
_LAYER_VECS = ("b1", "b2", "ln1_g", "ln1_b", "ln2_g", "ln2_b")


@dataclass
class Model:
    config: ModelConfig
    weights: dict  # name -> signed int64 array at scale f
    _diag_cache: dict = field(default_factory=dict, repr=False)

    def layer(self, l: int, name: str) -> np.ndarray:
        return self.weights[f"layer{l}.{name}"]

    def head_slice(self, l: int, name: str, h: int) -> np.ndarray:
        d2 = self.config.d2
        return self.layer(l, name)[:, h * d2 : (h + 1) * d2]

    def diag(self, key: str, matrix: np.ndarray, ctx: Context) -> PackedMatrix:
        """Plaintext diagonal encoding of a weight matrix, memoized per modulus."""
        tag = (key, ctx.params.n_slots, ctx.params.plain_modulus)
        got = self._diag_cache.get(tag)
        if got is None:
            got = encode(matrix, EncodingKind.DIAGONAL, ctx, encrypted=False)
            self._diag_cache[tag] = got
        return got

    def fixed_point(self, ctx: Context) -> FixedPointParams:
        return FixedPointParams(self.config.f, ctx.params.plain_modulus)


def generate_toy_model(config: ModelConfig, seed: int = 0) -> Model:
    """Deterministic random weights, quantized to scale-f integers."""
    rng = np.random.default_rng(np.random.SeedSequence([0xC0DE, seed]))
    c = config
    scale = 1 << c.f

    def q(x):
        return np.round(np.asarray(x) * scale).astype(np.int64)

    w = {
        "tok_emb": q(rng.normal(0.0, 0.8, (c.vocab, c.d1))),
        "pos_emb": q(rng.normal(0.0, 0.8, (c.max_seq, c.d1))),
    }
    for l in range(c.layers):
        pre = f"layer{l}."
        s_attn = 0.9 / np.sqrt(c.d1)
        w[pre + "wq"] = q(rng.normal(0.0, s_attn, (c.d1, c.d1)))
        w[pre + "wk"] = q(rng.normal(0.0, s_attn, (c.d1, c.d1)))
        w[pre + "wv"] = q(rng.normal(0.0, s_attn, (c.d1, c.d1)))
        w[pre + "wo"] = q(rng.normal(0.0, s_attn, (c.d1, c.d1)))
        w[pre + "w1"] = q(rng.normal(0.0, 1.0 / np.sqrt(c.d1), (c.d1, c.ffn_dim)))
        w[pre + "w2"] = q(rng.normal(0.0, 1.0 / np.sqrt(c.ffn_dim), (c.ffn_dim, c.d1)))
        w[pre + "b1"] = q(rng.normal(0.0, 0.05, c.ffn_dim))
        w[pre + "b2"] = q(rng.normal(0.0, 0.05, c.d1))
        w[pre + "ln1_g"] = q(1.0 + rng.normal(0.0, 0.05, c.d1))
        w[pre + "ln1_b"] = q(rng.normal(0.0, 0.05, c.d1))
        w[pre + "ln2_g"] = q(1.0 + rng.normal(0.0, 0.05, c.d1))
        w[pre + "ln2_b"] = q(rng.normal(0.0, 0.05, c.d1))
    # untied unembedding keeps greedy streams from locking onto one token
    w["unembed"] = q(rng.normal(0.0, 0.6, (c.d1, c.vocab)))
    return Model(config, w)


def save_model(model: Model, path) -> None:
    """Manifest JSON plus one binary matrix file per weight (p=0 marks
    signed fixed-point payloads)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, mat in model.weights.items():
        fname = name.replace(".", "_") + ".bin"
        arr = mat if mat.ndim == 2 else mat.reshape(1, -1)
        save_matrix(path / fname, arr, p=0)
        files[name] = {"file": fname, "shape": list(mat.shape)}
    manifest = {"config": model.config.as_dict(), "weights": files}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _expected_shape(name: str, c: ModelConfig) -> tuple:
    if name == "tok_emb":
        return (c.vocab, c.d1)
    if name == "pos_emb":
        return (c.max_seq, c.d1)
    if name == "unembed":
        return (c.d1, c.vocab)
    base = name.split(".", 1)[1]
    return {
        "wq": (c.d1, c.d1),
        "wk": (c.d1, c.d1),
        "wv": (c.d1, c.d1),
        "wo": (c.d1, c.d1),
        "w1": (c.d1, c.ffn_dim),
        "w2": (c.ffn_dim, c.d1),
        "b1": (c.ffn_dim,),
        "b2": (c.d1,),
        "ln1_g": (c.d1,),
        "ln1_b": (c.d1,),
        "ln2_g": (c.d1,),
        "ln2_b": (c.d1,),
    }[base]


def load_model(path) -> Model:
    """Load and schema-check a saved model directory."""
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.exists():
        raise ParameterError(f"{path}: no manifest.json")
    try:
        manifest = json.loads(manifest_file.read_text())
        config = ModelConfig(**manifest["config"])
        entries = manifest["weights"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParameterError(f"{path}: malformed manifest ({e})") from e

    expected = {"tok_emb", "pos_emb", "unembed"}
    for l in range(config.layers):
        expected |= {f"layer{l}.{k}" for k in _LAYER_MATS + _LAYER_VECS}
    if set(entries) != expected:
        raise ParameterError(
            f"{path}: weight set mismatch (missing {sorted(expected - set(entries))[:3]}...)"
        )

    weights = {}
    for name, meta in entries.items():
        mat, _ = load_matrix(path / meta["file"])
        shape = tuple(meta["shape"])
        if shape != _expected_shape(name, config):
            raise ParameterError(
                f"{path}: {name} has shape {shape}, expected {_expected_shape(name, config)}"
            )
        weights[name] = mat.reshape(shape)
    return Model(config, weights)


# ----------------------------------------------------------------------
# shared pipeline arithmetic
# ----------------------------------------------------------------------


def _embed(model: Model, token: int, position: int) -> np.ndarray:
    c = model.config
    if not 0 <= token < c.vocab:
        raise ParameterError(f"token {token} out of vocabulary")
    if position >= c.max_seq:
        raise ParameterError(f"position {position} beyond max_seq {c.max_seq}")
    return model.weights["tok_emb"][token] + model.weights["pos_emb"][position]


def _modmul(x: np.ndarray, W: np.ndarray, p: int) -> np.ndarray:
    """Signed matmul with the same mod-p wrap semantics as the backend."""
    return to_signed(np.mod(x.astype(np.int64) @ W.astype(np.int64), p), p)


@dataclass
class GenerationState:
    position: int
    caches: list  # [layer][head] -> KVCache
    next_logits: np.ndarray
    tokens: list = field(default_factory=list)

    @property
    def t_auto(self) -> int:
        return self.caches[0][0].t_auto


# ----------------------------------------------------------------------
# oracle (plaintext fixed point, identical arithmetic)
# ----------------------------------------------------------------------


class _OracleCache:
    def __init__(self):
        self.K: list = []
        self.V: list = []


def _oracle_block(model, l, X, fp, p, caches, causal_rows):
    """One transformer layer on an m x d1 slab; appends K/V to the caches.

    Prefill rows (causal_rows=True) use the additive-mask softmax over all
    cached positions, exactly as the encrypted prefill kernel does; the
    mask annihilates future positions in integer arithmetic.
    """
    c = model.config
    heads_out = []
    for h in range(c.heads):
        Q = fp_truncate(_modmul(X, model.head_slice(l, "wq", h), p), fp.f)
        K = fp_truncate(_modmul(X, model.head_slice(l, "wk", h), p), fp.f)
        V = fp_truncate(_modmul(X, model.head_slice(l, "wv", h), p), fp.f)
        caches[l][h].K.extend(K)
        caches[l][h].V.extend(V)
        Kall = np.asarray(caches[l][h].K)
        Vall = np.asarray(caches[l][h].V)
        O = np.zeros((X.shape[0], c.d2), dtype=np.int64)
        for i in range(X.shape[0]):
            s = to_signed(np.mod(Q[i] @ Kall.T, p), p)
            if causal_rows:
                a = causal_attention_weights(s, i, c.d2, fp)
            else:
                a = attention_weights(s, c.d2, fp)
            O[i] = fp_truncate(to_signed(np.mod(a @ Vall, p), p), fp.f)
        heads_out.append(O)
    attn = fp_truncate(_modmul(np.concatenate(heads_out, axis=1), model.layer(l, "wo"), p), fp.f)
    X = np.stack(
        [
            fp_layernorm(X[i] + attn[i], model.layer(l, "ln1_g"), model.layer(l, "ln1_b"), fp)
            for i in range(X.shape[0])
        ]
    )
    h1 = _modmul(X, model.layer(l, "w1"), p) + (model.layer(l, "b1") << fp.f)
    hact = fp_gelu(fp_truncate(h1, fp.f), fp)
    h2 = _modmul(hact, model.layer(l, "w2"), p) + (model.layer(l, "b2") << fp.f)
    h2 = fp_truncate(h2, fp.f)
    X = np.stack(
        [
            fp_layernorm(X[i] + h2[i], model.layer(l, "ln2_g"), model.layer(l, "ln2_b"), fp)
            for i in range(X.shape[0])
        ]
    )
    return X


def oracle_generate(model: Model, prompt: list, k: int, p: int) -> list:
    """Greedy generation in plain fixed-point arithmetic; ground truth for
    every equivalence test."""
    c = model.config
    if not 1 <= len(prompt) <= c.max_seq or len(prompt) + k > c.max_seq:
        raise ParameterError("prompt/generation length exceeds max_seq")
    fp = FixedPointParams(c.f, p)
    caches = [[_OracleCache() for _ in range(c.heads)] for _ in range(c.layers)]

    X = np.stack([_embed(model, t, i) for i, t in enumerate(prompt)])
    for l in range(c.layers):
        X = _oracle_block(model, l, X, fp, p, caches, causal_rows=True)
    logits = fp_truncate(_modmul(X[-1:], model.weights["unembed"], p)[0], fp.f)

    out = []
    pos = len(prompt)
    for _ in range(k):
        token = int(np.argmax(logits))
        out.append(token)
        x = _embed(model, token, pos)[None, :]
        for l in range(c.layers):
            x = _oracle_block(model, l, x, fp, p, caches, causal_rows=False)
        logits = fp_truncate(_modmul(x, model.weights["unembed"], p)[0], fp.f)
        pos += 1
    return out


# ----------------------------------------------------------------------
# encrypted pipeline
# ----------------------------------------------------------------------


def _matrix_roundtrip(parts, m, ctx, mpc, fn):
    """Pull outer columns into the share domain, apply fn (m x d matrix ->
    m x d matrix of signed scale-f ints), re-encrypt columns."""
    cols = []
    for part in parts:
        sp = he_to_shares(part, ctx, mpc, length=m)
        cols.append(reconstruct(sp))
    M = np.stack(cols, axis=1)
    out = fn(M)
    return [shares_to_he(share_vector(out[:, j], mpc), ctx, mpc) for j in range(out.shape[1])]


def _vector_roundtrip(ct, length, ctx, mpc, fn):
    sp = he_to_shares(ct, ctx, mpc, length=length)
    return shares_to_he(share_vector(fn(reconstruct(sp)), mpc), ctx, mpc)


def _trunc_packed(P: PackedMatrix, fp, ctx, mpc) -> PackedMatrix:
    parts = [
        shares_to_he(truncate(he_to_shares(part, ctx, mpc, length=P.encoding.rows), fp, mpc), ctx, mpc)
        for part in P.parts
    ]
    return PackedMatrix(P.encoding, parts, encrypted=True, slot_period=None)


def _channels(ctx_seed, layers, heads, p):
    root = np.random.SeedSequence([0x707, ctx_seed])
    kids = root.spawn(layers * heads + 1)
    chans = {}
    i = 0
    for l in range(layers):
        for h in range(heads):
            chans[(l, h)] = MpcChannel(p, kids[i])
            i += 1
    chans["common"] = MpcChannel(p, kids[-1])
    return chans


def _total_mpc_bytes(chans) -> int:
    return sum(ch.bytes_sent for ch in chans.values())


def _run_heads(tasks, threads: int):
    """Run per-head closures, optionally in a thread pool; order-stable."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda fn: fn(), tasks))
    return [fn() for fn in tasks]


def prefill(model: Model, prompt: list, ctx: Context, chans=None, threads: int = 1):
    """Batched prompt pass: outer-diagonal CPMM projections, outer-outer
    attention, MPC nonlinears; leaves outer-packed K/V caches behind."""
    c = model.config
    if not 1 <= len(prompt) <= c.max_seq:
        raise ParameterError("prompt length out of range")
    p = ctx.params.plain_modulus
    fp = model.fixed_point(ctx)
    if chans is None:
        chans = _channels(0, c.layers, c.heads, p)
    m = len(prompt)

    X = np.stack([_embed(model, t, i) for i, t in enumerate(prompt)])
    X_enc = encode(np.mod(X, p), EncodingKind.OUTER, ctx)

    caches = [[None] * c.heads for _ in range(c.layers)]
    for l in range(c.layers):
        def head_task(h, l=l, X_enc=X_enc):
            hctx = ctx.fork()

            def run():
                ch = chans[(l, h)]
                Qh = _trunc_packed(
                    cpmm_outer_diagonal(X_enc, model.diag(f"{l}.wq.{h}", model.head_slice(l, "wq", h), hctx), hctx),
                    fp, hctx, ch,
                )
                Kh = _trunc_packed(
                    cpmm_outer_diagonal(X_enc, model.diag(f"{l}.wk.{h}", model.head_slice(l, "wk", h), hctx), hctx),
                    fp, hctx, ch,
                )
                Vh = _trunc_packed(
                    cpmm_outer_diagonal(X_enc, model.diag(f"{l}.wv.{h}", model.head_slice(l, "wv", h), hctx), hctx),
                    fp, hctx, ch,
                )
                Oh = prefill_attention(Qh, Kh, Vh, fp, hctx, ch, causal=True)
                cache = init_cache(Kh, Vh, hctx)
                return hctx, Oh, cache
            return run

        results = _run_heads([head_task(h) for h in range(c.heads)], threads)
        o_parts = []
        for h, (hctx, Oh, cache) in enumerate(results):
            ctx.join(hctx)
            caches[l][h] = cache
            o_parts.extend(Oh.parts)
        O_cat = PackedMatrix(
            replace(X_enc.encoding, cols=c.d1), o_parts, encrypted=True, slot_period=None
        )

        ch = chans["common"]
        attn = cpmm_outer_diagonal(O_cat, model.diag(f"{l}.wo", model.layer(l, "wo"), ctx), ctx)
        attn = _trunc_packed(attn, fp, ctx, ch)
        resid = [ctx.add(X_enc.parts[j], attn.parts[j]) for j in range(c.d1)]

        g1, b1 = model.layer(l, "ln1_g"), model.layer(l, "ln1_b")
        ln1 = _matrix_roundtrip(
            resid, m, ctx, ch,
            lambda M: np.stack([fp_layernorm(M[i], g1, b1, fp) for i in range(m)]),
        )
        X_enc = PackedMatrix(replace(X_enc.encoding, cols=c.d1), ln1, encrypted=True)

        h1 = cpmm_outer_diagonal(X_enc, model.diag(f"{l}.w1", model.layer(l, "w1"), ctx), ctx)
        b1v = model.layer(l, "b1") << fp.f
        h1p = [
            ctx.add_plain(part, ctx.plain_from_dense(np.full(m, b1v[j]) % p))
            for j, part in enumerate(h1.parts)
        ]
        hact = _matrix_roundtrip(
            h1p, m, ctx, ch, lambda M: fp_gelu(fp_truncate(M, fp.f), fp)
        )
        Hm = PackedMatrix(replace(X_enc.encoding, cols=c.ffn_dim), hact, encrypted=True)

        h2 = cpmm_outer_diagonal(Hm, model.diag(f"{l}.w2", model.layer(l, "w2"), ctx), ctx)
        b2v = model.layer(l, "b2") << fp.f
        h2p = [
            ctx.add_plain(part, ctx.plain_from_dense(np.full(m, b2v[j]) % p))
            for j, part in enumerate(h2.parts)
        ]
        h2t = _matrix_roundtrip(h2p, m, ctx, ch, lambda M: fp_truncate(M, fp.f))
        resid2 = [ctx.add(ln1[j], h2t[j]) for j in range(c.d1)]
        g2, b2 = model.layer(l, "ln2_g"), model.layer(l, "ln2_b")
        ln2 = _matrix_roundtrip(
            resid2, m, ctx, ch,
            lambda M: np.stack([fp_layernorm(M[i], g2, b2, fp) for i in range(m)]),
        )
        X_enc = PackedMatrix(replace(X_enc.encoding, cols=c.d1), ln2, encrypted=True)

    # last-position logits via the decode-side kernel
    ch = chans["common"]
    last = np.array([reconstruct(he_to_shares(part, ctx, ch, length=m))[m - 1] for part in X_enc.parts])
    x_last = shares_to_he(share_vector(last, ch), ctx, ch)
    logits_ct = cpvm_inner_diagonal(x_last, model.diag("unembed", model.weights["unembed"], ctx), ctx)
    logits = fp_truncate(to_signed(ctx.decrypt(logits_ct), p)[: c.vocab], fp.f)

    return GenerationState(position=m, caches=caches, next_logits=logits)


def decode_step(model: Model, state: GenerationState, ctx: Context, chans=None, threads: int = 1):
    """Select the next token greedily, then run one single-token pass:
    CPVM projections, refresh check, cache append, heterogeneous attention."""
    c = model.config
    p = ctx.params.plain_modulus
    fp = model.fixed_point(ctx)
    if chans is None:
        chans = _channels(0, c.layers, c.heads, p)
    token = int(np.argmax(state.next_logits))
    pos = state.position
    if pos >= c.max_seq:
        raise ParameterError("generation exceeded max_seq")

    # lazy refresh check before this step's appends
    caches = [
        [maybe_refresh(state.caches[l][h], ctx, chans[(l, h)]) for h in range(c.heads)]
        for l in range(c.layers)
    ]

    x = ctx.encrypt(ctx.plain_from_dense(np.mod(_embed(model, token, pos), p)))
    for l in range(c.layers):
        def head_task(h, l=l, x=x):
            hctx = ctx.fork()

            def run():
                ch = chans[(l, h)]
                def proj(name):
                    raw = cpvm_inner_diagonal(
                        x, model.diag(f"{l}.{name}.{h}", model.head_slice(l, name, h), hctx), hctx
                    )
                    return shares_to_he(truncate(he_to_shares(raw, hctx, ch, length=c.d2), fp, ch), hctx, ch)
                qh, kh, vh = proj("wq"), proj("wk"), proj("wv")
                cache = append_token(caches[l][h], kh, vh, hctx)
                oh = attention_step(qh, cache, fp, hctx, ch)
                return hctx, oh, cache
            return run

        results = _run_heads([head_task(h) for h in range(c.heads)], threads)
        o_cat = None
        for h, (hctx, oh, cache) in enumerate(results):
            ctx.join(hctx)
            caches[l][h] = cache
            placed = ctx.rotate(oh, -(h * c.d2)) if h else oh
            o_cat = placed if o_cat is None else ctx.add(o_cat, placed)

        ch = chans["common"]
        attn = cpvm_inner_diagonal(o_cat, model.diag(f"{l}.wo", model.layer(l, "wo"), ctx), ctx)
        attn = shares_to_he(truncate(he_to_shares(attn, ctx, ch, length=c.d1), fp, ch), ctx, ch)
        g1, b1 = model.layer(l, "ln1_g"), model.layer(l, "ln1_b")
        x = _vector_roundtrip(
            ctx.add(x, attn), c.d1, ctx, ch, lambda v: fp_layernorm(v, g1, b1, fp)
        )
        h1 = cpvm_inner_diagonal(x, model.diag(f"{l}.w1", model.layer(l, "w1"), ctx), ctx)
        h1 = ctx.add_plain(h1, ctx.plain_from_dense(np.mod(model.layer(l, "b1") << fp.f, p)))
        h1 = _vector_roundtrip(
            h1, c.ffn_dim, ctx, ch, lambda v: fp_gelu(fp_truncate(v, fp.f), fp)
        )
        h2 = cpvm_inner_diagonal(h1, model.diag(f"{l}.w2", model.layer(l, "w2"), ctx), ctx)
        h2 = ctx.add_plain(h2, ctx.plain_from_dense(np.mod(model.layer(l, "b2") << fp.f, p)))
        h2 = _vector_roundtrip(h2, c.d1, ctx, ch, lambda v: fp_truncate(v, fp.f))
        g2, b2 = model.layer(l, "ln2_g"), model.layer(l, "ln2_b")
        x = _vector_roundtrip(
            ctx.add(x, h2), c.d1, ctx, ch, lambda v: fp_layernorm(v, g2, b2, fp)
        )

    logits_ct = cpvm_inner_diagonal(x, model.diag("unembed", model.weights["unembed"], ctx), ctx)
    logits = fp_truncate(to_signed(ctx.decrypt(logits_ct), p)[: c.vocab], fp.f)

    new_state = GenerationState(
        position=pos + 1,
        caches=caches,
        next_logits=logits,
        tokens=state.tokens + [token],
    )
    return token, new_state


def generate(model: Model, prompt: list, k: int, ctx: Context, seed: int = 0, threads: int = 1):
    """Encrypted prefill + k greedy decode steps; returns (tokens, report)."""
    c = model.config
    if len(prompt) + k > c.max_seq:
        raise ParameterError("prompt + generation exceeds max_seq")
    chans = _channels(seed, c.layers, c.heads, ctx.params.plain_modulus)

    before = ctx.counter.snapshot()
    state = prefill(model, prompt, ctx, chans, threads)
    prefill_counters = ctx.counter.delta(before)
    prefill_bytes = _total_mpc_bytes(chans)

    def total_refreshes(st):
        return sum(
            len(st.caches[l][h].refresh_log)
            for l in range(c.layers)
            for h in range(c.heads)
        )

    steps = []
    tokens = []
    for _ in range(k):
        before = ctx.counter.snapshot()
        bytes_before = _total_mpc_bytes(chans)
        refreshes_before = total_refreshes(state)
        token, state = decode_step(model, state, ctx, chans, threads)
        tokens.append(token)
        stats = cache_stats(state.caches[0][0])
        steps.append(
            {
                "step": len(tokens),
                "token": token,
                "counters": ctx.counter.delta(before),
                "mpc_bytes": _total_mpc_bytes(chans) - bytes_before,
                "refresh_events": total_refreshes(state) - refreshes_before,
                "cache_auto_cts": stats["auto_ct_count"],
                "cache_cts": stats["ct_count"],
            }
        )

    ctx.counter.mpc_bytes = _total_mpc_bytes(chans)
    report = {
        "config": c.as_dict(),
        "prompt_len": len(prompt),
        "generated": k,
        "backend": {
            "n_slots": ctx.params.n_slots,
            "plain_modulus": ctx.params.plain_modulus,
        },
        "prefill": {"counters": prefill_counters, "mpc_bytes": prefill_bytes},
        "steps": steps,
        "totals": ctx.counter.as_dict(),
    }
    return tokens, report


def bolt_reference_generate(model: Model, prompt: list, k: int, ctx: Context, seed: int = 0):
    """Stateless baseline: reprocess the full prefix with the prefill
    kernels at every step (no KV reuse).  Same tokens, quadratic cost."""
    c = model.config
    chans = _channels(seed, c.layers, c.heads, ctx.params.plain_modulus)
    tokens = []
    steps = []
    seq = list(prompt)
    for _ in range(k):
        before = ctx.counter.snapshot()
        state = prefill(model, seq, ctx, chans)
        token = int(np.argmax(state.next_logits))
        tokens.append(token)
        seq.append(token)
        steps.append({"step": len(tokens), "token": token, "counters": ctx.counter.delta(before)})
    return tokens, {"steps": steps, "totals": ctx.counter.as_dict()}
