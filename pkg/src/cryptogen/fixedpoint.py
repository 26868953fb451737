"""Fixed-point arithmetic shared by the MPC-side protocols and the
plaintext reference pipeline.

Reals are encoded as round(v * 2^f) in Z_p with values >= p/2 standing for
negatives.  Every function here operates on signed int64 numpy arrays (or
Python ints) and is exactly deterministic, so the encrypted pipeline and
the plaintext oracle share one implementation of each nonlinear step.

Polynomial coefficients below were produced by tools/fit_nonlinear_coeffs.py
and are frozen; rerun the script to regenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import ParameterError

__all__ = [
    "CAUSAL_MASK_EXPONENT",
    "FixedPointParams",
    "GELU_CLIP",
    "attention_weights",
    "causal_attention_weights",
    "fp_encode",
    "fp_decode",
    "fp_gelu",
    "fp_layernorm",
    "fp_reciprocal",
    "fp_softmax",
    "fp_truncate",
    "from_signed",
    "to_signed",
]

# GELU quartic on [0, 3.2] with zero intercept (so GELU(0) is exactly 0),
# evaluated in two squaring rounds as c4*(x^2 + beta*x)^2 + c2p*x^2 + c1*x.
# Max |err| 2.1e-3 in floats.
GELU_CLIP = 3.2
_G_C4 = 0.0203101927
_G_C3 = -0.1792823041
_G_C2 = 0.5309976652
_G_C1 = 0.4701539873
_G_BETA = _G_C3 / (2.0 * _G_C4)
_G_C2P = _G_C2 - _G_C4 * _G_BETA * _G_BETA

# exp(r) quadratic on the softmax residual range (-ln2, 0], fit padded to
# [-0.72, 0.02].  Max |err| 2.5e-3 in floats.
_E_C2 = 0.3558034634
_E_C1 = 0.9634474169
_E_C0 = 0.9982613301

_Z_SHIFT_CAP = 48  # int64-safe right-shift bound; payloads are far smaller


@dataclass(frozen=True)
class FixedPointParams:
    """Scale exponent and modulus of the signed fixed-point embedding."""

    f: int
    p: int
    reciprocal_iters: int = 4

    def __post_init__(self):
        if self.f < 1:
            raise ParameterError("fraction bits must be positive")
        if (1 << (2 * self.f + 6)) >= self.p:
            raise ParameterError(
                f"need 2^(2f+6) < p for product headroom; f={self.f} p={self.p}"
            )
        if self.reciprocal_iters < 1:
            raise ParameterError("reciprocal needs at least one iteration")

    @property
    def scale(self) -> int:
        return 1 << self.f

    def quantize(self, v: float) -> int:
        return int(round(v * self.scale))


def to_signed(v, p: int):
    """Map Z_p residues to signed representatives in (-p/2, p/2]."""
    v = np.asarray(v, dtype=np.int64)
    return np.where(v > p // 2, v - p, v)


def from_signed(v, p: int):
    return np.mod(np.asarray(v, dtype=np.int64), p)


def fp_encode(x, fp: FixedPointParams) -> np.ndarray:
    """Reals -> signed fixed-point integers (not reduced mod p)."""
    return np.round(np.asarray(x, dtype=np.float64) * fp.scale).astype(np.int64)


def fp_decode(v, fp: FixedPointParams) -> np.ndarray:
    return np.asarray(v, dtype=np.float64) / fp.scale


def fp_truncate(v, f: int):
    """Floor-divide signed values by 2^f (arithmetic shift)."""
    return np.asarray(v, dtype=np.int64) >> f


def fp_gelu(x, fp: FixedPointParams) -> np.ndarray:
    """GELU on signed scale-f integers: quartic inside [-3.2, 3.2] via two
    squarings, exact passthrough/zero outside, negative side by symmetry
    GELU(x) = x + GELU(-x)."""
    f = fp.f
    x = np.asarray(x, dtype=np.int64)
    clip = fp.quantize(GELU_CLIP)
    c4 = fp.quantize(_G_C4)
    beta = fp.quantize(_G_BETA)
    c2p = fp.quantize(_G_C2P)
    c1 = fp.quantize(_G_C1)

    ax = np.minimum(np.abs(x), clip)
    m1 = (ax * ax) >> f
    u = m1 + ((beta * ax) >> f)
    m2 = (u * u) >> f
    g = ((c4 * m2) >> f) + ((c2p * m1) >> f) + ((c1 * ax) >> f)
    inside = np.where(x >= 0, g, x + g)
    outside = np.where(x > 0, x, 0)
    return np.where(np.abs(x) > clip, outside, inside)


def fp_reciprocal(s: int, fp: FixedPointParams, work_bits: int | None = None) -> tuple[int, int]:
    """Newton reciprocal of a positive scale-f integer.

    Returns (y, q) with y ~ 2^(f+q)/s, i.e. a scale-q encoding of 1/s_real.
    The initial guess comes from the bit length of s (always a lower bound,
    so the iteration converges from below).
    """
    if s <= 0:
        raise ParameterError("reciprocal needs a positive input")
    q = 2 * fp.f if work_bits is None else work_bits
    y = 1 << max(0, fp.f + q - int(s).bit_length())
    for _ in range(fp.reciprocal_iters):
        t = (s * y) >> fp.f
        y = (y * ((1 << (q + 1)) - t)) >> q
    return y, q


def fp_softmax(s, fp: FixedPointParams) -> np.ndarray:
    """Integer-only softmax on signed scale-f scores.

    After max subtraction each score is decomposed as (-ln2)*z + r with
    integer z and residual r in (-ln2, 0]; exp(r) comes from the frozen
    quadratic and is shifted right by z.  The final division uses the
    Newton reciprocal.  Output is scale f, summing to 2^f within L LSBs.
    """
    f = fp.f
    s = np.asarray(s, dtype=np.int64)
    L = s.shape[0]
    if L == 0:
        raise ParameterError("softmax needs at least one score")
    if L == 1:
        return np.array([fp.scale], dtype=np.int64)
    inv_ln2 = fp.quantize(1.0 / math.log(2.0))
    ln2 = fp.quantize(math.log(2.0))
    c2, c1, c0 = (fp.quantize(c) for c in (_E_C2, _E_C1, _E_C0))

    x = s - s.max()
    z = ((-x) * inv_ln2) >> (2 * f)
    r = x + z * ln2
    er = ((c2 * ((r * r) >> f)) >> f) + ((c1 * r) >> f) + c0
    er = np.maximum(er, 0)
    e = er >> np.minimum(z, _Z_SHIFT_CAP)
    total = int(e.sum())
    rec, q = fp_reciprocal(total, fp)
    return (e * rec + (1 << (q - 1))) >> q


def _fp_inv_sqrt(var: int, f: int, iters: int = 3) -> int:
    """Newton inverse square root: var at scale 2f -> 1/sigma at scale f.

    Seeded from the integer square root (a pure bit-length power of two can
    start up to sqrt(2) off, which three iterations cannot always repair to
    the advertised tolerance); the iterations polish the seed.
    """
    y = (1 << (2 * f)) // max(math.isqrt(var), 1)
    three = 3 << f
    for _ in range(iters):
        t1 = (var * y) >> (2 * f)
        t2 = (t1 * y) >> f
        y = (y * (three - t2)) >> (f + 1)
    return y


def _round_div(a: int, d: int) -> int:
    """Round-to-nearest signed integer division (ties away from zero)."""
    if a >= 0:
        return (2 * a + d) // (2 * d)
    return -((2 * (-a) + d) // (2 * d))


CAUSAL_MASK_EXPONENT = 6  # additive mask -2^(f+6): annihilated after softmax


def attention_weights(scores_2f, d2: int, fp: FixedPointParams) -> np.ndarray:
    """Scale-2f raw scores -> softmax weights at scale f: rescale, multiply
    by the quantized 1/sqrt(d2), softmax."""
    s1 = fp_truncate(scores_2f, fp.f)
    s2 = (s1 * fp.quantize(1.0 / math.sqrt(d2))) >> fp.f
    return fp_softmax(s2, fp)


def causal_attention_weights(
    row_2f, row_index: int, d2: int, fp: FixedPointParams
) -> np.ndarray:
    """Prefill row: like attention_weights but positions beyond row_index
    get the additive causal mask, whose weight underflows to exactly zero."""
    s1 = fp_truncate(np.asarray(row_2f, dtype=np.int64), fp.f)
    s2 = (s1 * fp.quantize(1.0 / math.sqrt(d2))) >> fp.f
    mask = np.zeros_like(s2)
    mask[row_index + 1 :] = -(1 << (fp.f + CAUSAL_MASK_EXPONENT))
    return fp_softmax(s2 + mask, fp)


def fp_layernorm(x, gain, bias, fp: FixedPointParams) -> np.ndarray:
    """LayerNorm on signed scale-f integers with Newton inverse-sqrt.

    Zero variance falls back to the bias (gamma * 0 + beta).
    """
    f = fp.f
    x = np.asarray(x, dtype=np.int64)
    gain = np.asarray(gain, dtype=np.int64)
    bias = np.asarray(bias, dtype=np.int64)
    d = x.shape[0]
    if d < 2:
        raise ParameterError("layernorm needs at least two values")
    mu = _round_div(int(x.sum()), d)
    c = x - mu
    var = _round_div(int((c * c).sum()), d)  # scale 2f
    if var == 0:
        return bias.copy()
    inv_std = _fp_inv_sqrt(var, f)
    normed = (c * inv_std) >> f
    return ((gain * normed) >> f) + bias
