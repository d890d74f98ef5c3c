"""Uniform point streams on (0,1)^s and their Gaussian images.

Two stream kinds are provided: a seeded pseudo-random stream (PCG64) and
Sobol' points, optionally randomised by a linear matrix scramble plus a
digital shift. Points are mapped to R^s coordinate-wise by the inverse
normal CDF (Moro's approximation, polished by one Newton step).
"""
from __future__ import annotations

import functools
import io
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _kernels
from .errors import CapacityError, DomainError, ParseError

DIGITS = 32
MAX_POINTS = 2**DIGITS

__all__ = [
    "DirectionNumbers",
    "DirectionRecord",
    "SobolSampler",
    "UniformStream",
    "default_direction_numbers",
    "inverse_normal_cdf",
    "load_direction_numbers",
    "next_points",
    "to_gaussian",
]


@dataclass(frozen=True)
class DirectionRecord:
    """One row ``d s a m_1 .. m_s`` of a Joe-Kuo table."""

    d: int
    s: int
    a: int
    m: tuple[int, ...]

    def direction_ints(self) -> np.ndarray:
        """The 32 direction integers ``v_k = m_k * 2**(32-k)``, k = 1..32."""
        s, a = self.s, self.a
        m = list(self.m)
        for k in range(s, DIGITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        return np.array([m[k] << (DIGITS - 1 - k) for k in range(DIGITS)], dtype=np.uint32)


@dataclass(frozen=True)
class DirectionNumbers:
    """Direction-number records for dimensions 2, 3, ...; dimension 1 is built in."""

    records: tuple[DirectionRecord, ...]

    @property
    def dimension_count(self) -> int:
        return len(self.records) + 1

    def direction_ints(self, s: int) -> np.ndarray:
        """(s, 32) array of direction integers for the first ``s`` dimensions."""
        if s > self.dimension_count:
            raise CapacityError(
                f"{s} dimensions requested, table provides {self.dimension_count}"
            )
        v = np.zeros((s, DIGITS), dtype=np.uint32)
        if s >= 1:
            # van der Corput: v_k = 2**(32-k)
            v[0] = np.left_shift(np.uint32(1), np.arange(DIGITS - 1, -1, -1, dtype=np.uint32))
        for i in range(1, s):
            v[i] = self.records[i - 1].direction_ints()
        return v


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("ascii"))
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="ascii") as fh:
            return io.StringIO(fh.read())
    if isinstance(source, io.TextIOBase):
        return source
    data = source.read()
    return io.StringIO(data.decode("ascii") if isinstance(data, bytes) else data)


def load_direction_numbers(source, s: int | None = None) -> DirectionNumbers:
    """Parse a Joe-Kuo direction-number table.

    Parameters
    ----------
    source : path, bytes, or text/binary stream
        Header line followed by rows ``d s a m_1 ... m_s``.
    s : int, optional
        Number of dimensions needed. Only the first ``s - 1`` records are
        parsed; ``None`` parses the whole table.

    Raises
    ------
    ParseError
        On a malformed row (the line number is reported).
    CapacityError
        If the table holds fewer than ``s - 1`` records.
    """
    if s is not None and s < 0:
        raise ValueError("s must be nonnegative")
    needed = None if s is None else max(s - 1, 0)
    records = []
    for lineno, line in enumerate(_open_text(source), start=1):
        if needed is not None and len(records) >= needed:
            break
        fields = line.split()
        if not fields:
            continue
        if not fields[0].lstrip("-").isdigit():
            if records or lineno > 1:
                raise ParseError(f"unexpected text {line.strip()!r}", lineno)
            continue  # header
        try:
            nums = [int(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-integer field in {line.strip()!r}", lineno) from None
        if len(nums) < 4:
            raise ParseError("expected at least 4 fields", lineno)
        d, deg, a, m = nums[0], nums[1], nums[2], tuple(nums[3:])
        if d != len(records) + 2:
            raise ParseError(f"expected dimension {len(records) + 2}, got {d}", lineno)
        if deg < 1 or len(m) != deg:
            raise ParseError(f"degree {deg} does not match {len(m)} initial numbers", lineno)
        if not 0 <= a < max(1, 2 ** (deg - 1)):
            raise ParseError(f"coefficient a={a} out of range for degree {deg}", lineno)
        for i, mi in enumerate(m, start=1):
            if mi % 2 == 0:
                raise ParseError(f"m_{i}={mi} is even", lineno)
            if not 0 < mi < 2**i:
                raise ParseError(f"m_{i}={mi} must lie in (0, 2**{i})", lineno)
        records.append(DirectionRecord(d, deg, a, m))
    if needed is not None and len(records) < needed:
        raise CapacityError(f"{s} dimensions requested, table provides {len(records) + 1}")
    return DirectionNumbers(tuple(records))


@functools.lru_cache(maxsize=None)
def _bundled_table() -> str:
    return resources.files("preintqmc").joinpath("data/new-joe-kuo-6.txt").read_text("ascii")


def default_direction_numbers(s: int | None = None) -> DirectionNumbers:
    """The bundled Joe-Kuo ``new-joe-kuo-6`` table (1111 dimensions)."""
    return load_direction_numbers(io.StringIO(_bundled_table()), s)


def _linear_scramble(v, rng):
    """Left-multiply each dimension's generator by a random unit lower-triangular bit matrix.

    Digit ``i`` (weight 2**-(i+1)) lives in integer bit ``31 - i``; row ``i``
    of the matrix may only mix in digits ``k < i``, i.e. higher integer bits.
    """
    s = v.shape[0]
    rows = np.arange(DIGITS, dtype=np.uint64)
    diag = np.left_shift(np.uint64(1), np.uint64(DIGITS - 1) - rows)
    above = ~(2 * diag - np.uint64(1)) & np.uint64(0xFFFFFFFF)
    bits = rng.integers(0, 2**DIGITS, size=(s, DIGITS), dtype=np.uint64)
    masks = (diag | (bits & above)).astype(np.uint32)
    parity = np.bitwise_count(masks[:, :, None] & v[:, None, :]) & 1
    weights = np.left_shift(np.uint32(1), (DIGITS - 1 - rows).astype(np.uint32))
    return np.bitwise_or.reduce(parity.astype(np.uint32) * weights[None, :, None], axis=1)


class SobolSampler:
    """Sobol' points in natural order, optionally linearly scrambled and shifted.

    Parameters
    ----------
    s : int
        Dimension (0 is allowed and yields empty rows).
    scramble : {"none", "linear-affine"}
    seed : int or numpy SeedSequence, optional
        Seed for the scramble matrices and the digital shift.
    direction_numbers : DirectionNumbers, optional
        Defaults to the bundled Joe-Kuo table.
    """

    SCRAMBLES = ("none", "linear-affine")

    def __init__(self, s, scramble="none", seed=None, direction_numbers=None):
        if scramble not in self.SCRAMBLES:
            raise ValueError(f"scramble must be one of {self.SCRAMBLES}, got {scramble!r}")
        if s < 0:
            raise ValueError("dimension must be nonnegative")
        if direction_numbers is None:
            direction_numbers = default_direction_numbers(s)
        self.s = s
        self.scramble = scramble
        v = direction_numbers.direction_ints(s)
        if scramble == "linear-affine":
            rng = np.random.default_rng(seed)
            self._v = _linear_scramble(v, rng)
            self._shift = rng.integers(0, 2**DIGITS, size=s, dtype=np.uint64).astype(np.uint32)
        else:
            self._v = v
            self._shift = np.zeros(s, dtype=np.uint32)
        self._v.setflags(write=False)
        self._shift.setflags(write=False)
        self.cursor = 0

    @property
    def scrambled(self) -> bool:
        return self.scramble != "none"

    def skip_to(self, index: int) -> SobolSampler:
        """Move the cursor to ``index``; the next point is computed in O(log index)."""
        if not 0 <= index <= MAX_POINTS:
            raise CapacityError(f"index {index} outside [0, 2**{DIGITS}]")
        self.cursor = index
        return self

    def points(self, start: int, n: int) -> np.ndarray:
        """Points ``start .. start+n-1`` without touching the cursor."""
        if start < 0 or start + n > MAX_POINTS:
            raise CapacityError(f"Sobol' capacity is 2**{DIGITS} points")
        return _kernels.sobol_block(self._v, self._shift, start, n, self.scrambled)

    def next_points(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be at least 1")
        out = self.points(self.cursor, n)
        self.cursor += n
        return out


class UniformStream:
    """Replayable stream of points in (0,1)^s.

    Use :meth:`pseudo_random` or :meth:`sobol` to construct one.
    """

    def __init__(self, s, kind, seed=None, sampler=None):
        if kind not in ("pseudo", "sobol"):
            raise ValueError(f"unknown stream kind {kind!r}")
        self.s = s
        self.kind = kind
        self.seed = seed
        self._sampler = sampler
        self._bitgen = np.random.PCG64(seed) if kind == "pseudo" else None
        self._cursor = 0

    @classmethod
    def pseudo_random(cls, s, seed=None) -> UniformStream:
        return cls(s, "pseudo", seed=seed)

    @classmethod
    def sobol(cls, s, seed=None, scramble="linear-affine", direction_numbers=None) -> UniformStream:
        sampler = SobolSampler(s, scramble, seed, direction_numbers)
        return cls(s, "sobol", seed=seed, sampler=sampler)

    @property
    def cursor(self) -> int:
        return self._cursor

    def skip_to(self, index: int) -> UniformStream:
        if index < 0:
            raise ValueError("cursor must be nonnegative")
        if self.kind == "sobol":
            self._sampler.skip_to(index)
        else:
            self._bitgen = np.random.PCG64(self.seed)
            # Generator.random consumes one 64-bit draw per double
            self._bitgen.advance(index * self.s)
        self._cursor = index
        return self

    def next_points(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be at least 1")
        if self.kind == "sobol":
            out = self._sampler.next_points(n)
        else:
            out = np.random.Generator(self._bitgen).random((n, self.s))
            out[out == 0.0] = 2.0**-54
        self._cursor += n
        return out


def next_points(stream: UniformStream, n: int) -> np.ndarray:
    """Next ``n`` points of ``stream`` as an (n, s) array; advances the cursor."""
    return stream.next_points(n)


def _check_open_unit(u):
    u = np.asarray(u, dtype=np.float64)
    bad = ~((u > 0.0) & (u < 1.0))
    if bad.any():
        raise DomainError(f"inverse normal CDF needs 0 < u < 1, got {u[bad].flat[0]!r}")
    return u


def inverse_normal_cdf(u):
    """Standard normal quantile; scalar in, float out (arrays are mapped elementwise)."""
    arr = _check_open_unit(u)
    out = _kernels.norm_ppf(arr)
    return float(out) if out.ndim == 0 else out


def to_gaussian(points) -> np.ndarray:
    """Map points in (0,1)^s to R^s coordinate-wise."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.copy()
    return _kernels.norm_ppf(_check_open_unit(arr))
