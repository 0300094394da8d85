"""
Finite-shot emulation of QPE readout.

Bitstrings are drawn by inverse-CDF sampling with numpy's PCG64 generator. Every
EmpiricalDistribution carries the seed it was drawn from, plus the draw number when it
came from a SampleStream, so any single draw can be repeated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from dqpe.core.qpe import ParentDistribution
from dqpe.errors import InputError
from dqpe.logging_config import get_logger

logger = get_logger("core.sampling")

GENERATOR_NAME = "PCG64"


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Named, versioned generator for a recorded integer seed."""
    return np.random.Generator(np.random.PCG64(seed))


def draw_rng(seed: int, draw: int) -> np.random.Generator:
    """Generator of draw number `draw` in the stream seeded with `seed`."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(draw,))))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Independent child seeds for parallel cells."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint64)[0] >> 1) for child in children]


def fresh_seed() -> int:
    """OS entropy as a recordable integer seed."""
    return int(np.random.SeedSequence().entropy)


class SampleStream:
    """
    Numbered draws under one recorded seed.

    Draw k uses its own generator derived from (seed, k), so it can be replayed
    without replaying the draws before it. A None seed is replaced by fresh entropy,
    which is then recorded like any other seed.
    """

    def __init__(self, seed: Optional[int] = None) -> None:
        self.seed = fresh_seed() if seed is None else int(seed)
        self.draws = 0

    def seek(self, draw: int) -> None:
        if draw < 0:
            raise InputError(f"draw must be >= 0, got {draw}")
        self.draws = int(draw)

    def next_generator(self) -> tuple[int, np.random.Generator]:
        draw = self.draws
        self.draws += 1
        return draw, draw_rng(self.seed, draw)


SeedLike = Union[int, SampleStream, None]


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Bitstring counts from a finite number of shots."""

    counts: np.ndarray
    shots: int
    seed: int
    parent: ParentDistribution = field(repr=False)
    generator: str = GENERATOR_NAME
    draw: Optional[int] = None

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise InputError(f"shots must be >= 1, got {self.shots}")
        if int(self.counts.sum()) != self.shots:
            raise InputError("counts do not sum to shots")

    def rows(self) -> Iterator[dict]:
        for j, count in enumerate(self.counts):
            yield {"index": j, "count": int(count), "frequency": count / self.shots}

    def sidecar(self) -> dict:
        record = {"seed": self.seed, "shots": self.shots, "generator": self.generator}
        if self.draw is not None:
            record["draw"] = self.draw
        return record


def sample(dist: ParentDistribution, shots: int, seed: SeedLike = None) -> EmpiricalDistribution:
    """
    Draw shots bitstrings from the parent distribution.

    Args:
        dist: parent distribution
        shots: number of measurements, >= 1
        seed: integer seed, a SampleStream for repeated draws, or None for fresh
            entropy (recorded in the result)

    Returns:
        EmpiricalDistribution with counts per bitstring
    """
    if isinstance(shots, bool) or int(shots) != shots or shots < 1:
        raise InputError(f"shots must be a positive integer, got {shots!r}")
    shots = int(shots)
    if isinstance(seed, SampleStream):
        draw, rng = seed.next_generator()
        recorded = seed.seed
    else:
        draw = None
        recorded = fresh_seed() if seed is None else int(seed)
        rng = make_rng(recorded)

    cdf = np.cumsum(dist.probabilities)
    cdf /= cdf[-1]
    draws = rng.random(shots)
    indices = np.searchsorted(cdf, draws, side="right")
    np.minimum(indices, dist.grid.size - 1, out=indices)
    counts = np.bincount(indices, minlength=dist.grid.size)
    logger.debug(f"Sampled {shots} shots (seed={recorded}, draw={draw})")
    return EmpiricalDistribution(counts=counts, shots=shots, seed=recorded, parent=dist, draw=draw)


def frequencies(emp: EmpiricalDistribution) -> ParentDistribution:
    """counts / shots as a ParentDistribution."""
    return ParentDistribution(emp.counts / emp.shots, emp.parent.grid)
