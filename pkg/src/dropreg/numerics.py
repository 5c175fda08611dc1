"""Dense float64 matrix helpers and named, splittable random streams.

Matrices are plain 2-D ``numpy`` arrays of float64, row-major, with rows
holding batch samples. Randomness comes from :class:`RngStream`, a thin
wrapper over the counter-based Philox generator keyed by a 64-bit
``(seed, stream_id)`` pair: the same pair always reproduces the same
sequence, and distinct stream ids give independent sequences (Philox has a
2^256 period and a 128-bit key, so collisions between named children are
not a practical concern).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionError, DomainError

Matrix = np.ndarray

_MASK64 = (1 << 64) - 1


def as_matrix(data) -> Matrix:
    """Coerce ``data`` to a 2-D float64 array, validating finiteness."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix contains non-finite entries")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with shape checking.

    Raises ``DimensionError`` naming both shapes when the inner dimensions
    disagree, and ``DomainError`` if the product overflows to non-finite.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-D operands, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} x {b.shape} "
            f"(inner dimensions {a.shape[1]} != {b.shape[0]})"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.all(np.isfinite(out)):
        raise DomainError("matmul produced non-finite entries")
    return out


def bernoulli_mask(rng: RngStream, rows: int, cols: int, keep_prob: float) -> Matrix:
    """Draw a (rows, cols) 0/1 matrix, each entry 1 with probability keep_prob.

    Consumes ``rows * cols`` uniforms from ``rng``. ``keep_prob=1`` gives all
    ones and ``keep_prob=0`` all zeros, exactly.
    """
    if not (0.0 <= keep_prob <= 1.0):
        raise DomainError(f"keep_prob must be in [0, 1], got {keep_prob}")
    if rows < 0 or cols < 0:
        raise DomainError(f"mask shape must be non-negative, got ({rows}, {cols})")
    u = rng.uniform((rows, cols))
    return (u < keep_prob).astype(np.float64)


def softmax_rows(logits: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction for stability.

    Every output row is non-negative and sums to 1 to within 1e-12; adding a
    constant to a row leaves its softmax unchanged.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D matrix, got ndim={z.ndim}")
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax_rows input contains non-finite entries")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _splitmix64(x: int) -> int:
    """SplitMix64 finalizer; a fixed 64-bit bijective mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & _MASK64
    if isinstance(token, str):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"stream tokens must be int or str, got {type(token).__name__}")


class RngStream:
    """A named random stream: Philox keyed by (seed, stream_id).

    Streams form a tree: :meth:`child` derives a new, statistically
    independent stream from the parent's identity and a sequence of tokens
    (ints or strings), without consuming any parent state. Deriving the same
    child twice yields the same stream, so every draw in an experiment is a
    pure function of the root seed and the path of names leading to it.

    Draw methods consume the stream's internal counter; a stream is meant to
    have a single owner. Share work across threads by handing each worker its
    own child, never the same stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed, self.stream_id])
        )

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *tokens) -> "RngStream":
        """Derive the independent stream named by ``tokens`` under this one."""
        if not tokens:
            raise DomainError("child() needs at least one token")
        sid = self.stream_id
        for token in tokens:
            sid = _splitmix64(sid ^ _token_to_int(token))
        return RngStream(self.seed, sid)

    def uniform(self, shape) -> np.ndarray:
        """Uniforms in [0, 1) with the given shape."""
        return self._gen.random(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws with the given shape."""
        return self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        """A random permutation of range(n)."""
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        """Integers drawn uniformly from [low, high)."""
        return self._gen.integers(low, high, size=shape)

    @property
    def state(self) -> dict:
        """JSON-serializable snapshot of identity plus counter position."""
        raw = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "counter": [int(v) for v in raw["state"]["counter"]],
            "buffer": [int(v) for v in raw["buffer"]],
            "buffer_pos": int(raw["buffer_pos"]),
            "has_uint32": int(raw["has_uint32"]),
            "uinteger": int(raw["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        """Rebuild a stream, including its counter position, from ``state``."""
        stream = cls(state["seed"], state["stream_id"])
        raw = stream._gen.bit_generator.state
        raw["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        raw["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        raw["buffer_pos"] = state["buffer_pos"]
        raw["has_uint32"] = state["has_uint32"]
        raw["uinteger"] = state["uinteger"]
        stream._gen.bit_generator.state = raw
        return stream
