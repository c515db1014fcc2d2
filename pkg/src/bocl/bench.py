"""Benchmark objectives, Latin-hypercube initialization, and observation noise.

All objectives are minimized.  The registry maps the names used by the
CLI ("hartmann6", "ackley8", "levy10") to their definitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Bounds, Dataset, InvalidInputError, RngStream, as_point, latin_hypercube

__all__ = ["Benchmark", "get_benchmark", "benchmark_names", "evaluate", "lhs_init", "add_noise"]


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    dim: int
    bounds: Bounds
    known_min_value: float
    known_min_point: np.ndarray | None
    fn: Callable[[np.ndarray], float]


# Canonical 4x6 constants for the six-dimensional Hartmann function.
_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)
_HARTMANN_OPT = np.array([0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573])


def _hartmann6(x: np.ndarray) -> float:
    inner = np.sum(_HARTMANN_A * (x[None, :] - _HARTMANN_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN_ALPHA * np.exp(-inner)))


def _ackley(x: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2.0 * math.pi) -> float:
    d = x.size
    term1 = -a * math.exp(-b * math.sqrt(np.sum(x * x) / d))
    term2 = -math.exp(np.sum(np.cos(c * x)) / d)
    return float(term1 + term2 + a + math.e)


def _levy(x: np.ndarray) -> float:
    w = 1.0 + (x - 1.0) / 4.0
    head = math.sin(math.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(math.pi * w[:-1] + 1.0) ** 2))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + math.sin(2.0 * math.pi * w[-1]) ** 2)
    return float(head + mid + tail)


def _registry() -> dict[str, Benchmark]:
    return {
        "hartmann6": Benchmark(
            "hartmann6", 6, Bounds.cube(0.0, 1.0, 6), -3.32237, _HARTMANN_OPT, _hartmann6
        ),
        "ackley8": Benchmark(
            "ackley8", 8, Bounds.cube(-5.0, 5.0, 8), 0.0, np.zeros(8), _ackley
        ),
        "levy10": Benchmark(
            "levy10", 10, Bounds.cube(-10.0, 10.0, 10), 0.0, np.ones(10), _levy
        ),
    }


_BENCHMARKS = _registry()


def benchmark_names() -> tuple[str, ...]:
    return tuple(_BENCHMARKS)


def get_benchmark(name: str) -> Benchmark:
    try:
        return _BENCHMARKS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown benchmark {name!r}; options: {sorted(_BENCHMARKS)}"
        ) from None


def evaluate(b: Benchmark, x) -> float:
    """Objective value at ``x``; the point must lie inside the benchmark box."""
    p = as_point(x, b.dim)
    if not b.bounds.contains(p):
        raise InvalidInputError(f"point outside the {b.name} domain")
    return b.fn(p)


def lhs_init(b: Benchmark, n: int, rng: RngStream) -> Dataset:
    """Latin-hypercube design of size ``n`` evaluated on the benchmark."""
    pts = latin_hypercube(b.bounds, n, rng)
    ys = np.array([b.fn(p) for p in pts])
    return Dataset.from_observations(pts, ys)


def add_noise(y: float, scale: float, rng: RngStream) -> float:
    """Observation ``y`` plus centered Gaussian noise of standard deviation ``scale``."""
    if scale < 0:
        raise InvalidInputError("noise scale must be >= 0")
    if scale == 0:
        return float(y)
    return float(y + scale * rng.generator.standard_normal())
