"""Seedable random streams and Gamma/Beta variates.

A stream is identified by ``(seed, stream_id)``; the pair is hashed through
numpy's ``SeedSequence`` into a counter-based Philox generator, so stream
``b`` is reproducible on its own regardless of how many other streams exist
or which worker consumes it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

SEED_ENV = "INTERSECTFAIR_SEED"
_U64 = (1 << 64) - 1
_TINY = 2.0**-53


def default_seed(fallback: int = 0) -> int:
    """Seed from the environment override, else ``fallback``."""
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else fallback


@dataclass(frozen=True)
class RngStream:
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v <= _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer")
            object.__setattr__(self, name, v)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def child(self, *path: int) -> "RngStream":
        """Stream derived from this one by an integer path (for nested experiments)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *path))
        return RngStream(int(ss.generate_state(1, np.uint64)[0]), 0)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng or 0)).generator()


def _log_gamma_ge1(gen: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    """log of Gamma(shape, 1) draws for shape >= 1 (Marsaglia-Tsang squeeze)."""
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(d)
    todo = np.arange(d.size)
    while todo.size:
        x = gen.standard_normal(todo.size)
        u = gen.random(todo.size)
        dd, cc = d[todo], c[todo]
        v = (1.0 + cc * x) ** 3
        pos = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.where(pos, np.log(np.where(pos, v, 1.0)), -np.inf)
            x2 = x * x
            ok = pos & ((u < 1.0 - 0.0331 * x2 * x2)
                        | (np.log(u) < 0.5 * x2 + dd * (1.0 - v + logv)))
        out[todo[ok]] = np.log(dd[ok]) + logv[ok]
        todo = todo[~ok]
    return out


def log_gamma_variates(gen: np.random.Generator, shape) -> np.ndarray:
    """log Gamma(shape, 1) draws, elementwise over ``shape``.

    Shapes below one use the boost ``G(a+1) * U**(1/a)``, done in log space
    so very small shapes do not underflow.
    """
    shape = np.asarray(shape, dtype=float)
    if (shape <= 0).any() or not np.isfinite(shape).all():
        raise ValueError("gamma shape must be positive and finite")
    flat = shape.reshape(-1)
    small = flat < 1.0
    out = _log_gamma_ge1(gen, np.where(small, flat + 1.0, flat))
    if small.any():
        u = gen.random(int(small.sum()))
        out[small] += np.log1p(-u) / flat[small]
    return out.reshape(shape.shape)


def sample_beta(rng, a, b, size=None) -> np.ndarray | float:
    """Beta(a, b) draws as a ratio of Gamma variates, clamped inside (0, 1)."""
    gen = as_generator(rng)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if size is not None:
        a, b = np.broadcast_to(a, size), np.broadcast_to(b, size)
    a, b = np.broadcast_arrays(a, b)
    lx = log_gamma_variates(gen, a)
    ly = log_gamma_variates(gen, b)
    with np.errstate(over="ignore"):
        x = 1.0 / (1.0 + np.exp(ly - lx))
    x = np.clip(x, _TINY, 1.0 - _TINY)
    return float(x) if x.ndim == 0 else x
