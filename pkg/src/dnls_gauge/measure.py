"""Sampling from the Gaussian measure with covariance (1 + |n|^{2s})^{-1}.

Randomness comes from numpy's counter-based Philox generator.  The key is
``(master_seed, stream_id)``; candidate ``i`` lives in block ``i // BLOCK``
whose counter is set to the block number, so any candidate can be
regenerated without touching the others.  Inside a block the normals are
drawn mode by mode in the order ``0, 1, -1, 2, -2, ...``; raising the cutoff
only appends draws, so a sample at cutoff N projects exactly onto the sample
at any smaller cutoff drawn with the same key.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .spectral import SpectralFunction, modes, sobolev_weights

BLOCK = 1024
PROBE_CANDIDATES = 1 << 20
MIN_ACCEPTANCE = 1e-6
_MASK64 = (1 << 64) - 1


class StarvationError(RuntimeError):
    """Rejection sampling accepts (almost) nothing; the ball is too small."""


@dataclass(frozen=True)
class MeasureSpec:
    s: float
    cutoff: int
    radius: float | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("radius must be positive when present")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureSpec":
        return cls(
            s=float(d["s"]),
            cutoff=int(d["cutoff"]),
            radius=None if d.get("radius") is None else float(d["radius"]),
            master_seed=int(d.get("master_seed", 0)),
        )

    def with_(self, **kw) -> "MeasureSpec":
        return MeasureSpec(**{**asdict(self), **kw})


def variances(cutoff: int, s: float) -> np.ndarray:
    """E|u(n)|^2 = 1 / (1 + |n|^{2s}) for n = -cutoff..cutoff."""
    return 1.0 / (1.0 + np.abs(modes(cutoff)).astype(float) ** (2 * s))


def _draw_order(cutoff: int) -> np.ndarray:
    # storage index of the p-th drawn mode: 0, 1, -1, 2, -2, ...
    order = [cutoff]
    for n in range(1, cutoff + 1):
        order += [cutoff + n, cutoff - n]
    return np.array(order)


def _generator(master_seed: int, stream_id: int, block: int) -> np.random.Generator:
    key = ((master_seed & _MASK64) << 64) | (stream_id & _MASK64)
    bg = np.random.Philox(key=key, counter=(block & _MASK64) << 192)
    return np.random.Generator(bg)


def draw_block(spec: MeasureSpec, stream_id: int, block: int) -> np.ndarray:
    """Unrestricted samples ``block*BLOCK .. (block+1)*BLOCK - 1`` as a (BLOCK, 2N+1) array."""
    N = spec.cutoff
    g = _generator(spec.master_seed, stream_id, block).standard_normal((2 * N + 1, BLOCK, 2))
    z = (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2.0)
    out = np.empty((BLOCK, 2 * N + 1), dtype=np.complex128)
    out[:, _draw_order(N)] = z.T
    return out * np.sqrt(variances(N, spec.s))


def candidate(spec: MeasureSpec, stream_id: int, index: int) -> SpectralFunction:
    """The ``index``-th unrestricted candidate of a stream."""
    b, r = divmod(index, BLOCK)
    return SpectralFunction(spec.cutoff, draw_block(spec, stream_id, b)[r])


def in_ball(c: np.ndarray, radius: float | None) -> np.ndarray:
    if radius is None:
        return np.ones(np.shape(c)[:-1], dtype=bool)
    return np.sum(np.abs(c) ** 2, axis=-1) <= radius**2


def iter_accepted(spec: MeasureSpec, stream_id: int, first_block: int = 0) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(block, candidates, accept_mask)`` block by block.

    Raises :class:`StarvationError` once ``PROBE_CANDIDATES`` candidates have
    been seen with acceptance rate below ``MIN_ACCEPTANCE``.
    """
    seen = accepted = 0
    b = first_block
    while True:
        c = draw_block(spec, stream_id, b)
        keep = in_ball(c, spec.radius)
        seen += BLOCK
        accepted += int(keep.sum())
        if seen >= PROBE_CANDIDATES and accepted < MIN_ACCEPTANCE * seen:
            raise StarvationError(
                f"acceptance {accepted}/{seen} below {MIN_ACCEPTANCE:g} for radius {spec.radius}; use a larger R"
            )
        yield b, c, keep
        b += 1


def sample_array(spec: MeasureSpec, count: int, stream_id: int = 0) -> tuple[np.ndarray, int]:
    """First ``count`` accepted samples of a stream, plus how many candidates were rejected on the way."""
    if count < 1:
        raise ValueError("count must be >= 1")
    parts, got, rejected = [], 0, 0
    for _, c, keep in iter_accepted(spec, stream_id):
        idx = np.flatnonzero(keep)[: count - got]
        parts.append(c[idx])
        got += len(idx)
        if got >= count:
            rejected += int(idx[-1] + 1 - len(idx)) if len(idx) else 0
            break
        rejected += int((~keep).sum())
    return np.concatenate(parts), rejected


@dataclass
class SampleBatch:
    spec: MeasureSpec
    samples: list[SpectralFunction] = field(repr=False)
    accepted: int
    rejected: int
    stream_id: int = 0

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "stream_id": self.stream_id,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "samples": [u.to_dict() for u in self.samples],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def sample(spec: MeasureSpec, count: int, stream_id: int = 0) -> SampleBatch:
    """Draw ``count`` samples of the (possibly ball-restricted) measure."""
    arr, rejected = sample_array(spec, count, stream_id)
    return SampleBatch(spec, [SpectralFunction(spec.cutoff, c) for c in arr], len(arr), rejected, stream_id)


# With E|g|^2 = 1 the coefficient u(n) has Lebesgue density proportional to
# exp(-(1 + |n|^{2s}) |u(n)|^2) on C = R^2, i.e. twice the exponent of the
# Gibbs weight exp(-1/2 ||u||_{H^s}^2).
SAMPLING_EXPONENT = 2.0


def log_density_finite(u: SpectralFunction, spec: MeasureSpec) -> float:
    """``-1/2 ||P_N u||_{H^s}^2``: the Gibbs weight of the E_N marginal, unnormalised.

    This is the weight as conventionally written; the Lebesgue density of
    the sampler is its ``SAMPLING_EXPONENT``-th power (see
    :func:`log_sampling_density`).
    """
    if u.cutoff < spec.cutoff:
        raise ValueError("u.cutoff must be >= spec.cutoff")
    N = spec.cutoff
    c = u.coeffs[u.cutoff - N : u.cutoff + N + 1]
    w = 1.0 + sobolev_weights(N, spec.s)
    return -0.5 * float(np.sum(w * np.abs(c) ** 2))


def log_sampling_density(u: SpectralFunction, spec: MeasureSpec) -> float:
    """Unnormalised log-density of :func:`sample` w.r.t. Lebesgue on E_N = R^{2(2N+1)}."""
    return SAMPLING_EXPONENT * log_density_finite(u, spec)
