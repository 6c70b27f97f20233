"""Problem description and deterministic sampling of the random inputs.

The device is a conducting wire (region 1) centered in a steel tube
(region 3), with air in between (region 2).  Three inputs are random and
uniformly distributed: the tube inner radius ``r1``, the current magnitude
``i0`` and the tube relative permeability ``mu3``.  Everything else is
fixed geometry/material data.

Sampling is counter based: sample ``k`` of master seed ``s`` is a pure
function of ``(s, k)``, so parallel and incremental runs see identical
draws.  The generator is SplitMix64 (Steele/Lea/Flood, the JDK
SplittableRandom finalizer): the per-sample stream seed is the ``k``-th
output of SplitMix64 seeded with ``s``, and the three uniform variates of
the sample are the first three outputs of SplitMix64 seeded with the
stream seed.  Variates map to ``[0, 1)`` via the top 53 bits.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

MU0 = 4.0e-7 * math.pi  # vacuum permeability (H/m)


class ConfigurationError(ValueError):
    """Invalid physical/stochastic configuration."""


@dataclass(frozen=True)
class ModelParams:
    """Full deterministic description of one problem instance.

    Radii in meters, conductivity in S/m, omega in rad/s, current in A.
    ``mu1``/``mu2``/``mu3`` are relative permeabilities; regions 1 and 2
    are non-conducting vacuum-like media, so ``mu1 == mu2 == 1`` and
    ``sigma`` applies to region 3 only.
    """

    r0: float
    r1: float
    r2: float
    mu1: float = 1.0
    mu2: float = 1.0
    mu3: float = 1000.0
    sigma: float = 2.0e3
    omega: float = 2.0 * math.pi * 50.0
    i0: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.r0 < self.r1 < self.r2):
            raise ConfigurationError(
                f"radii must satisfy 0 < r0 < r1 < r2, got "
                f"r0={self.r0}, r1={self.r1}, r2={self.r2}"
            )
        if self.mu1 != 1.0 or self.mu2 != 1.0:
            raise ConfigurationError("wire and air regions must have mu = 1")
        if self.mu3 < 1.0:
            raise ConfigurationError(f"mu3 must be >= 1, got {self.mu3}")
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if self.omega <= 0.0:
            raise ConfigurationError(f"omega must be > 0, got {self.omega}")

    @property
    def source_density(self) -> float:
        """Phasor magnitude of the source current density i0 / (pi r0^2)."""
        return self.i0 / (math.pi * self.r0**2)

    @property
    def skin_depth(self) -> float:
        """Eddy-current decay length in the tube; inf for sigma = 0."""
        if self.sigma == 0.0:
            return math.inf
        return math.sqrt(2.0 / (self.omega * MU0 * self.mu3 * self.sigma))


@dataclass(frozen=True)
class ParameterDistributions:
    """Symmetric uniform distributions of the three random inputs."""

    r1_nominal: float = 0.5
    r1_halfwidth: float = 0.1
    i0_nominal: float = 100.0
    i0_halfwidth: float = 10.0
    mu3_nominal: float = 1000.0
    mu3_halfwidth: float = 400.0

    def __post_init__(self):
        for name in ("r1_halfwidth", "i0_halfwidth", "mu3_halfwidth"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.mu3_nominal - self.mu3_halfwidth < 1.0:
            raise ConfigurationError(
                "mu3 support must stay >= 1: nominal - halfwidth = "
                f"{self.mu3_nominal - self.mu3_halfwidth}"
            )
        if self.r1_nominal - self.r1_halfwidth <= 0.0:
            raise ConfigurationError("r1 support must stay positive")

    def check_compatible(self, fixed: ModelParams) -> None:
        """Require the random interface to stay strictly inside (r0, r2)."""
        lo = self.r1_nominal - self.r1_halfwidth
        hi = self.r1_nominal + self.r1_halfwidth
        if not (fixed.r0 < lo and hi < fixed.r2):
            raise ConfigurationError(
                f"r1 support [{lo}, {hi}] must lie strictly inside "
                f"(r0={fixed.r0}, r2={fixed.r2})"
            )


@dataclass(frozen=True)
class ParamSample:
    """One realization of (r1, i0, mu3), with its seed lineage."""

    r1: float
    i0: float
    mu3: float
    sample_index: int
    master_seed: int


# SplitMix64 constants; multiples of gamma precomputed to stay inside
# wrapping array arithmetic (numpy warns on scalar uint64 overflow).
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_GAMMA_J = np.array(
    [(j * 0x9E3779B97F4A7C15) % (1 << 64) for j in (1, 2, 3)], dtype=np.uint64
)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, elementwise on uint64 arrays (wrapping)."""
    z = (z ^ (z >> _U64(30))) * _MIX_A
    z = (z ^ (z >> _U64(27))) * _MIX_B
    return z ^ (z >> _U64(31))


def _uniform_streams(master_seed: int, indices: np.ndarray) -> np.ndarray:
    """Three independent U[0,1) variates per sample index, shape (n, 3)."""
    idx = np.atleast_1d(np.asarray(indices)).astype(np.uint64)
    seed = np.full(idx.shape, master_seed % (1 << 64), dtype=np.uint64)
    stream = _mix64(seed + (idx + _U64(1)) * _GAMMA)
    u = np.empty(idx.shape + (3,))
    for j in range(3):
        bits = _mix64(stream + _GAMMA_J[j])
        u[..., j] = (bits >> _U64(11)) * 2.0**-53
    return u


def draw_samples(
    dists: ParameterDistributions, master_seed: int, indices
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized draw: arrays (r1, i0, mu3) for the given sample indices."""
    u = _uniform_streams(master_seed, np.asarray(indices))
    r1 = dists.r1_nominal + dists.r1_halfwidth * (2.0 * u[..., 0] - 1.0)
    i0 = dists.i0_nominal + dists.i0_halfwidth * (2.0 * u[..., 1] - 1.0)
    mu3 = dists.mu3_nominal + dists.mu3_halfwidth * (2.0 * u[..., 2] - 1.0)
    return r1, i0, mu3


def draw_sample(
    dists: ParameterDistributions, master_seed: int, sample_index: int
) -> ParamSample:
    """Draw one sample; bit-reproducible for equal (master_seed, sample_index)."""
    r1, i0, mu3 = draw_samples(dists, master_seed, [sample_index])
    return ParamSample(
        r1=float(r1[0]),
        i0=float(i0[0]),
        mu3=float(mu3[0]),
        sample_index=sample_index,
        master_seed=master_seed,
    )


def nominal_params(dists: ParameterDistributions, fixed: ModelParams) -> ModelParams:
    """Fixed geometry/material values with the random fields at their means."""
    return dataclasses.replace(
        fixed, r1=dists.r1_nominal, i0=dists.i0_nominal, mu3=dists.mu3_nominal
    )


def apply_sample(fixed: ModelParams, s: ParamSample) -> ModelParams:
    """Override the three random fields; invariants are re-checked."""
    return dataclasses.replace(fixed, r1=s.r1, i0=s.i0, mu3=s.mu3)


def default_params() -> ModelParams:
    """Nominal instance with the repository default geometry and materials."""
    return nominal_params(ParameterDistributions(), ModelParams(r0=0.1, r1=0.5, r2=0.8))
