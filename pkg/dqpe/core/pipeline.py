"""
The scalar QPE pipeline E(x): Hamiltonian -> eigenphases -> readout distribution ->
estimator -> energy, with its smooth gradient.

The phase map is taken from the exact spectrum at a base point and is held fixed for
anything evaluated around that point (finite-difference stencils, derivatives).
"""

from __future__ import annotations

from dataclasses import replace
from functools import lru_cache
from typing import Optional

import numpy as np

from dqpe.core.estimator import GceConfig, TrigMoment, estimate
from dqpe.core.gradients import estimator_gradient, hellmann_feynman_oracle
from dqpe.core.qpe import ParentDistribution, PhaseMap, ReadoutGrid, spectral_distribution
from dqpe.core.sampling import EmpiricalDistribution, SampleStream, frequencies, sample
from dqpe.core.spectral import (
    EigenSystem,
    ParametrizedHamiltonian,
    adapt_to_state,
    as_statevector,
    eigendecompose,
)
from dqpe.errors import InputError
from dqpe.logging_config import get_logger

logger = get_logger("core.pipeline")

# fraction of the guard band a fixed map tolerates around its base spectrum
STENCIL_TOLERANCE = 0.9


class PhasePipeline:
    """
    Energy estimate of a ParametrizedHamiltonian for a fixed input state.

    With shots = 0 the estimator sees the exact parent distribution; otherwise every
    readout is the next numbered draw of `shots` samples from a SampleStream seeded
    once per pipeline. `seed` is the recorded seed, fresh entropy when none was given.
    """

    def __init__(
        self,
        system: ParametrizedHamiltonian,
        psi: np.ndarray,
        t: int,
        estimator: str = "gce",
        config: Optional[GceConfig] = None,
        shots: int = 0,
        seed: Optional[int] = None,
        margin: float = 0.05,
    ) -> None:
        if shots < 0:
            raise InputError(f"shots must be >= 0, got {shots}")
        self.system = system
        self.psi = as_statevector(psi)
        if self.psi.size != system.dimension:
            raise InputError(
                f"State dimension {self.psi.size} does not match Hamiltonian dimension {system.dimension}"
            )
        self.grid = ReadoutGrid(t)
        self.estimator = estimator
        self.config = config if config is not None else GceConfig.for_register(t)
        self.shots = int(shots)
        self.margin = margin
        self.last_empirical: Optional[EmpiricalDistribution] = None
        self._stream = SampleStream(seed) if self.shots else None
        self.seed = self._stream.seed if self._stream else seed
        self._eig = lru_cache(maxsize=32)(self._eig_uncached)

    @property
    def sampled(self) -> bool:
        return self.shots > 0

    @property
    def draws(self) -> int:
        """Empirical distributions drawn so far."""
        return self._stream.draws if self._stream else 0

    def _eig_uncached(self, key: tuple) -> EigenSystem:
        eig = eigendecompose(self.system.evaluate(np.array(key)))
        return adapt_to_state(eig, self.psi)

    def eigensystem(self, x: np.ndarray) -> EigenSystem:
        """Eigensystem at x with degenerate blocks adapted to the input state."""
        return self._eig(tuple(np.asarray(x, dtype=float).ravel()))

    def phase_map(self, x: np.ndarray) -> PhaseMap:
        """
        Map fixed by the exact spectrum at x. Points evaluated around x with this map
        (stencils, line searches) may drift up to 0.9 of a guard band past the span.
        """
        exact = PhaseMap.from_spectrum(self.eigensystem(x).eigenvalues, self.margin)
        return replace(exact, tolerance=STENCIL_TOLERANCE * exact.guard_band)

    def spectrum(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> tuple[np.ndarray, np.ndarray]:
        """(eigenphases, overlap weights) at x."""
        eig = self.eigensystem(x)
        phase_map = phase_map or self.phase_map(x)
        phases = np.atleast_1d(phase_map.phase_of_energy(eig.eigenvalues))
        weights = np.abs(eig.coefficients(self.psi)) ** 2
        return phases, weights / weights.sum()

    def distribution(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> ParentDistribution:
        phases, weights = self.spectrum(x, phase_map)
        return spectral_distribution(phases, weights, self.grid)

    def readout(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> ParentDistribution:
        """What the estimator sees: the parent distribution or a fresh empirical one."""
        parent = self.distribution(x, phase_map)
        if not self.sampled:
            return parent
        self.last_empirical = sample(parent, self.shots, self._stream)
        return frequencies(self.last_empirical)

    def moment(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> TrigMoment:
        return estimate(self.readout(x, phase_map), self.estimator, self.config)

    def _energy_from(self, readout: ParentDistribution, x: np.ndarray, phase_map: PhaseMap) -> float:
        mu = estimate(readout, self.estimator, self.config).mean_direction
        return float(phase_map.energy_of_phase(mu)) + self.system.offset(x)

    def _gradient_from(
        self, readout: Optional[ParentDistribution], x: np.ndarray, phase_map: PhaseMap
    ) -> np.ndarray:
        return estimator_gradient(
            self.system,
            x,
            self.psi,
            self.grid,
            self.config,
            estimator=self.estimator,
            phase_map=phase_map,
            readout=readout,
        )

    def energy(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> float:
        """Estimated total energy (hartree) including the constant offset."""
        x = np.asarray(x, dtype=float)
        phase_map = phase_map or self.phase_map(x)
        return self._energy_from(self.readout(x, phase_map), x, phase_map)

    def gradient(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> np.ndarray:
        """Smooth dE/dx; in sampled mode the estimator gradient is taken at a fresh draw."""
        x = np.asarray(x, dtype=float)
        phase_map = phase_map or self.phase_map(x)
        readout = self.readout(x, phase_map) if self.sampled else None
        return self._gradient_from(readout, x, phase_map)

    def evaluate(self, x: np.ndarray, phase_map: Optional[PhaseMap] = None) -> tuple[float, np.ndarray]:
        """
        Energy and smooth gradient at x read off one readout.

        In sampled mode both come from the same empirical distribution, so a call
        consumes exactly one draw of `shots` samples.
        """
        x = np.asarray(x, dtype=float)
        phase_map = phase_map or self.phase_map(x)
        readout = self.readout(x, phase_map)
        gradient = self._gradient_from(readout if self.sampled else None, x, phase_map)
        return self._energy_from(readout, x, phase_map), gradient

    def dominant_state(self, x: np.ndarray) -> tuple[int, float]:
        """Eigenindex with the largest overlap weight, and that weight."""
        eig = self.eigensystem(x)
        weights = np.abs(eig.coefficients(self.psi)) ** 2
        index = int(np.argmax(weights))
        return index, float(weights[index])

    def exact_energy(self, x: np.ndarray) -> float:
        index, _ = self.dominant_state(x)
        return float(self.eigensystem(x).eigenvalues[index]) + self.system.offset(x)

    def oracle_gradient(self, x: np.ndarray) -> np.ndarray:
        index, _ = self.dominant_state(x)
        return hellmann_feynman_oracle(self.system, x, index, psi=self.psi)
