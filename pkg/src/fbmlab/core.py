"""Uniform time grids, grid functions, and reproducible random streams."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of [0, T] with N steps (N+1 nodes)."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        out = np.linspace(0.0, self.horizon, self.steps + 1)
        out.setflags(write=False)
        return out


def make_grid(horizon: float, steps: int) -> TimeGrid:
    """Build the uniform grid on [0, horizon] with the given step count."""
    return TimeGrid(float(horizon), int(steps))


@dataclass(frozen=True)
class GridFunction:
    """Real samples on the nodes of a TimeGrid, scalar or vector valued.

    values has shape (N+1,) or (N+1, d); every entry must be finite.
    Instances are immutable: the array is made read-only on construction.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim not in (1, 2):
            raise ValueError("values must be 1- or 2-dimensional")
        if arr.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"values length {arr.shape[0]} does not match grid with "
                f"{self.grid.steps + 1} nodes"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> "GridFunction":
        return cls(grid, np.asarray([fn(t) for t in grid.nodes], dtype=float))


def _label_spawn_key(label) -> tuple[int, ...]:
    """Map an arbitrary JSON-representable label to a stable spawn key.

    Python's builtin hash is salted per process; a digest keeps streams
    identical across runs and machines.
    """
    payload = json.dumps(label, sort_keys=True, default=str).encode()
    digest = hashlib.sha256(payload).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4))


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus injective label-to-substream derivation."""

    master: int

    def stream(self, *label) -> np.random.Generator:
        """Reproducible generator for the given label.

        The same (master, label) pair always yields bit-identical draws;
        distinct labels give statistically independent streams.
        """
        seq = np.random.SeedSequence(
            entropy=self.master, spawn_key=_label_spawn_key(list(label))
        )
        return np.random.Generator(np.random.PCG64(seq))


@dataclass
class WorkPlan:
    """Worker-count knob shared by experiment drivers."""

    workers: int = 1

    def __post_init__(self):
        self.workers = max(1, int(self.workers))


def parallel_map(fn, items, workers: int = 1) -> list:
    """Map preserving input order; threads only when workers > 1.

    Each item must carry its own random stream, so the reduction order
    (input order) is what guarantees reproducibility.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
