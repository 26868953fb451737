"""Instrumented SIMD-ciphertext emulation over Z_p.

Exact slot-wise arithmetic with cyclic rotation, a linear noise-budget
ledger, and per-operation counting.  The emulation computes the true slot
values at every step (nothing is hidden), so every kernel built on top can
be verified against plain modular arithmetic.  Not cryptographically
secure, and not meant to be: it is the measurement substrate.

Noise is modelled as a bit ledger: every ciphertext starts with a fixed
budget and each operation subtracts a configured cost.  Decryption of a
ciphertext whose budget has reached zero raises, mirroring the correctness
failure of a real scheme.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "BackendParams",
    "Context",
    "DecryptionFailure",
    "NoiseBudgetExhausted",
    "NoiseCosts",
    "OpCounter",
    "ParameterError",
    "PlainVector",
    "SlotCiphertext",
    "default_plain_modulus",
    "is_prime",
    "new_context",
]

# int64 products must not wrap: (p-1)^2 < 2^63 requires p < 2^31.5; we keep
# a power-of-two margin.
MAX_PLAIN_MODULUS = 1 << 31

PlainVector = np.ndarray


class ParameterError(ValueError):
    """Backend parameters violate an invariant."""


class NoiseBudgetExhausted(RuntimeError):
    """An operation would drive a ciphertext's noise budget below zero."""


class DecryptionFailure(RuntimeError):
    """Decryption attempted on a ciphertext with no budget left."""


_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for b in _MR_BASES:
        if n % b == 0:
            return n == b
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def default_plain_modulus(n_slots: int, min_bits: int = 29) -> int:
    """Smallest prime >= 2^min_bits with p = 1 (mod 2*n_slots)."""
    step = 2 * n_slots
    start = 1 << min_bits
    c = start - (start % step) + 1
    if c < start:
        c += step
    while not is_prime(c):
        c += step
    return c


@dataclass(frozen=True)
class NoiseCosts:
    """Budget (bits) consumed per homomorphic operation."""

    mult_plain: int = 20
    mult_cipher: int = 40
    rotate: int = 2
    add: int = 0
    add_plain: int = 0

    def as_dict(self) -> dict:
        return {
            "mult_plain": self.mult_plain,
            "mult_cipher": self.mult_cipher,
            "rotate": self.rotate,
            "add": self.add,
            "add_plain": self.add_plain,
        }


@dataclass(frozen=True)
class BackendParams:
    """Emulation parameters: slot count, plaintext modulus, noise ledger."""

    n_slots: int = 8192
    plain_modulus: int = 536903681  # smallest prime >= 2^29 with p = 1 mod 2n
    initial_noise_budget: int = 190
    noise_costs: NoiseCosts = field(default_factory=NoiseCosts)
    refresh_threshold: int = 60

    def __post_init__(self):
        n, p = self.n_slots, self.plain_modulus
        if n < 2 or n & (n - 1):
            raise ParameterError(f"n_slots must be a power of two >= 2, got {n}")
        if not is_prime(p):
            raise ParameterError(f"plain_modulus {p} is not prime")
        if p % (2 * n) != 1:
            raise ParameterError(
                f"plain_modulus {p} must be 1 mod 2*n_slots (= {2 * n})"
            )
        if p >= MAX_PLAIN_MODULUS:
            raise ParameterError(
                f"plain_modulus {p} exceeds the int64-safe emulation bound 2^31"
            )
        costs = self.noise_costs.as_dict()
        if any(v < 0 for v in costs.values()):
            raise ParameterError(f"noise costs must be >= 0, got {costs}")
        if not 0 <= self.refresh_threshold < self.initial_noise_budget:
            raise ParameterError(
                "refresh_threshold must lie in [0, initial_noise_budget)"
            )

    @property
    def modulus_bits(self) -> int:
        return self.plain_modulus.bit_length()

    def ciphertext_bytes(self) -> int:
        """Modelled wire size of one ciphertext transfer."""
        return self.n_slots * self.modulus_bits // 8

    def to_json(self) -> str:
        d = {
            "n_slots": self.n_slots,
            "plain_modulus": self.plain_modulus,
            "initial_noise_budget": self.initial_noise_budget,
            "noise_costs": self.noise_costs.as_dict(),
            "refresh_threshold": self.refresh_threshold,
        }
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BackendParams":
        d = json.loads(text)
        costs = NoiseCosts(**d.pop("noise_costs", {}))
        return cls(noise_costs=costs, **d)


@dataclass
class OpCounter:
    """Monotone operation tallies; merge is field-wise sum."""

    mult_plain: int = 0
    mult_cipher: int = 0
    rotate: int = 0
    add: int = 0
    add_plain: int = 0
    encrypt: int = 0
    decrypt: int = 0
    refresh_events: int = 0
    mpc_bytes: int = 0

    _FIELDS = (
        "mult_plain",
        "mult_cipher",
        "rotate",
        "add",
        "add_plain",
        "encrypt",
        "decrypt",
        "refresh_events",
        "mpc_bytes",
    )

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self._FIELDS}

    def merge(self, other: "OpCounter") -> None:
        for k in self._FIELDS:
            setattr(self, k, getattr(self, k) + getattr(other, k))

    def snapshot(self) -> "OpCounter":
        return OpCounter(**self.as_dict())

    def delta(self, since: "OpCounter") -> dict:
        return {k: getattr(self, k) - getattr(since, k) for k in self._FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class SlotCiphertext:
    """An n-slot vector over Z_p with a noise budget.  Immutable."""

    slots: np.ndarray
    noise_budget: int
    id: int
    params: BackendParams

    def __post_init__(self):
        self.slots.setflags(write=False)

    @property
    def n_slots(self) -> int:
        return self.params.n_slots


def _as_slots(values, params: BackendParams) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or arr.shape[0] != params.n_slots:
        raise ParameterError(
            f"expected a vector of length {params.n_slots}, got shape {arr.shape}"
        )
    return np.mod(arr, params.plain_modulus)


_context_uid = itertools.count()


class Context:
    """Owns the op counter, the RNG stream, and ciphertext identity."""

    def __init__(self, params: BackendParams, seed=0):
        self.params = params
        self.counter = OpCounter()
        if isinstance(seed, np.random.SeedSequence):
            self._seed_seq = seed
        else:
            self._seed_seq = np.random.SeedSequence(seed)
        self.rng = np.random.default_rng(self._seed_seq)
        self._next_id = next(_context_uid) * 1_000_000_000

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def plain_vector(self, values) -> PlainVector:
        """Validate and reduce a plaintext operand to Z_p^n."""
        return _as_slots(values, self.params)

    def plain_from_dense(self, values) -> PlainVector:
        """Zero-pad a short vector into the first slots."""
        arr = np.asarray(values, dtype=np.int64)
        if arr.shape[0] > self.params.n_slots:
            raise ParameterError("vector longer than slot count")
        out = np.zeros(self.params.n_slots, dtype=np.int64)
        out[: arr.shape[0]] = arr
        return np.mod(out, self.params.plain_modulus)

    def zeros(self) -> PlainVector:
        return np.zeros(self.params.n_slots, dtype=np.int64)

    def fork(self) -> "Context":
        """Child context sharing params; counters merge at the join."""
        return Context(self.params, self._seed_seq.spawn(1)[0])

    def join(self, child: "Context") -> None:
        self.counter.merge(child.counter)

    def _emit(self, slots: np.ndarray, budget: int) -> SlotCiphertext:
        ct = SlotCiphertext(slots, budget, self._next_id, self.params)
        self._next_id += 1
        return ct

    def _check(self, *cts: SlotCiphertext) -> None:
        for ct in cts:
            if ct.params != self.params:
                raise ParameterError("ciphertext belongs to an incompatible context")

    def _spend(self, budget: int, cost: int) -> int:
        left = budget - cost
        if left < 0:
            raise NoiseBudgetExhausted(
                f"operation needs {cost} bits but only {budget} remain"
            )
        return left

    # ------------------------------------------------------------------
    # operations
    # ------------------------------------------------------------------

    def encrypt(self, v) -> SlotCiphertext:
        slots = _as_slots(v, self.params)
        self.counter.encrypt += 1
        return self._emit(slots.copy(), self.params.initial_noise_budget)

    def decrypt(self, ct: SlotCiphertext) -> PlainVector:
        self._check(ct)
        if ct.noise_budget <= 0:
            raise DecryptionFailure(
                "noise budget exhausted: decryption would be incorrect"
            )
        self.counter.decrypt += 1
        return ct.slots.copy()

    def add(self, a: SlotCiphertext, b: SlotCiphertext) -> SlotCiphertext:
        self._check(a, b)
        budget = self._spend(min(a.noise_budget, b.noise_budget), self.params.noise_costs.add)
        self.counter.add += 1
        return self._emit((a.slots + b.slots) % self.params.plain_modulus, budget)

    def add_plain(self, a: SlotCiphertext, v) -> SlotCiphertext:
        self._check(a)
        slots = _as_slots(v, self.params)
        budget = self._spend(a.noise_budget, self.params.noise_costs.add_plain)
        self.counter.add_plain += 1
        return self._emit((a.slots + slots) % self.params.plain_modulus, budget)

    def mult_plain(self, a: SlotCiphertext, v) -> SlotCiphertext:
        self._check(a)
        slots = _as_slots(v, self.params)
        budget = self._spend(a.noise_budget, self.params.noise_costs.mult_plain)
        self.counter.mult_plain += 1
        return self._emit((a.slots * slots) % self.params.plain_modulus, budget)

    def mult_cipher(self, a: SlotCiphertext, b: SlotCiphertext) -> SlotCiphertext:
        self._check(a, b)
        budget = self._spend(
            min(a.noise_budget, b.noise_budget), self.params.noise_costs.mult_cipher
        )
        self.counter.mult_cipher += 1
        return self._emit((a.slots * b.slots) % self.params.plain_modulus, budget)

    def rotate(self, a: SlotCiphertext, k: int) -> SlotCiphertext:
        """Cyclic left shift by k slots (k may be negative or >= n)."""
        self._check(a)
        budget = self._spend(a.noise_budget, self.params.noise_costs.rotate)
        self.counter.rotate += 1
        k = k % self.params.n_slots
        return self._emit(np.roll(a.slots, -k), budget)

    def with_budget(self, ct: SlotCiphertext, budget: int) -> SlotCiphertext:
        """Test hook: same values, explicit budget.  Not an HE operation."""
        self._check(ct)
        return replace(ct, noise_budget=budget)

    def load_ciphertext(self, values, budget: int) -> SlotCiphertext:
        """Rehydrate a serialized ciphertext; not counted as an operation."""
        return self._emit(_as_slots(values, self.params).copy(), budget)


def new_context(params: BackendParams, seed=0) -> Context:
    return Context(params, seed)
