"""Independent axisymmetric references for the 2D solver.

The geometry is rotationally symmetric, so the same eddy-current equation
reduces to one radial dimension:

    integral (1/mu) A' v' rho d_rho + j omega integral sigma A v rho d_rho
        = integral J v rho d_rho        (per unit 2 pi)

with A(r2) = 0 and a natural condition at rho = 0 (the rho weight
vanishes there).  A fine P1 solve of this form, the sigma = 0 closed form
from the circulation law, and a tensor Gauss-Legendre expectation over
the three random parameters provide the validation targets for the 2D
FEM and the sampling estimators.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import REGION_AIR, REGION_TUBE, REGION_WIRE, _BASE_N_TUBE, _tube_radii
from .model import MU0, ModelParams, ParameterDistributions

_SKIN_RESOLUTION = 10  # minimum intervals per skin depth in the tube


class OracleError(RuntimeError):
    """Radial reference solve failed or grid is inadequate."""


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing node radii with r0 and r1 on-grid."""

    radii: np.ndarray
    regions: np.ndarray  # per interval

    @property
    def n_intervals(self) -> int:
        return len(self.radii) - 1


def make_radial_grid(params: ModelParams, n_intervals: int = 100_000) -> RadialGrid:
    """Grid with intervals split 2:4:4 over wire/air/tube (the level-0
    region weighting) and tube grading matching the 2D mesh."""
    if n_intervals < 10:
        raise OracleError("radial grid needs at least 10 intervals")
    n_wire = max(2, round(0.2 * n_intervals))
    n_air = max(2, round(0.4 * n_intervals))
    n_tube = max(2, n_intervals - n_wire - n_air)

    wire = np.linspace(0.0, params.r0, n_wire + 1)
    air = np.linspace(params.r0, params.r1, n_air + 1)[1:]
    air[-1] = params.r1
    tube = _tube_radii(params.r1, params.r2, n_tube, _BASE_N_TUBE)
    radii = np.concatenate([wire, air, tube])
    regions = np.concatenate([
        np.full(n_wire, REGION_WIRE, np.int8),
        np.full(n_air, REGION_AIR, np.int8),
        np.full(n_tube, REGION_TUBE, np.int8),
    ])
    return RadialGrid(radii=radii, regions=regions)


def _interval_mu(grid: RadialGrid, params: ModelParams) -> np.ndarray:
    mu = np.empty(grid.n_intervals)
    mu[grid.regions == REGION_WIRE] = params.mu1
    mu[grid.regions == REGION_AIR] = params.mu2
    mu[grid.regions == REGION_TUBE] = params.mu3
    return MU0 * mu


def _check_skin_resolution(params: ModelParams, grid: RadialGrid) -> None:
    if params.sigma == 0.0:
        return
    delta = params.skin_depth
    lo, hi = params.r1, min(params.r1 + delta, params.r2)
    left = grid.radii[:-1]
    width = np.diff(grid.radii)
    in_layer = (grid.regions == REGION_TUBE) & (left < hi)
    if np.any(width[in_layer] > delta / _SKIN_RESOLUTION):
        raise OracleError(
            f"radial grid does not resolve the skin depth {delta:.4g} m "
            f"({_SKIN_RESOLUTION} intervals per depth required)"
        )


def radial_solve(params: ModelParams, grid: RadialGrid) -> np.ndarray:
    """Complex nodal A(rho) on the full grid (boundary node included)."""
    _check_skin_resolution(params, grid)
    rho = grid.radii
    h = np.diff(rho)
    if np.any(h <= 0.0):
        raise OracleError("radial grid radii must be strictly increasing")
    left = rho[:-1]
    mid = left + 0.5 * h
    mu = _interval_mu(grid, params)

    # P1 element matrices with the rho weight, exact integrals
    k_diag = mid / (mu * h)
    m11 = h * (left / 3.0 + h / 12.0)
    m22 = h * (left / 3.0 + h / 4.0)
    m12 = h * (left / 6.0 + h / 12.0)

    jws = 1j * params.omega * params.sigma * (grid.regions == REGION_TUBE)
    e11 = k_diag + jws * m11
    e22 = k_diag + jws * m22
    e12 = -k_diag + jws * m12

    n_nodes = len(rho)
    diag = np.zeros(n_nodes, dtype=complex)
    np.add.at(diag, np.arange(n_nodes - 1), e11)
    np.add.at(diag, np.arange(1, n_nodes), e22)
    off = e12  # between node i and i+1

    rhs = np.zeros(n_nodes, dtype=complex)
    wire = grid.regions == REGION_WIRE
    j_z = params.source_density
    rhs_l = j_z * h * (left / 2.0 + h / 6.0)
    rhs_r = j_z * h * (left / 2.0 + h / 3.0)
    np.add.at(rhs, np.arange(n_nodes - 1), np.where(wire, rhs_l, 0.0))
    np.add.at(rhs, np.arange(1, n_nodes), np.where(wire, rhs_r, 0.0))

    # eliminate the Dirichlet node at r2
    n = n_nodes - 1
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = off[: n - 1]
    ab[1, :] = diag[:n]
    ab[2, : n - 1] = off[: n - 1]
    try:
        a_free = sla.solve_banded((1, 1), ab, rhs[:n])
    except Exception as exc:  # pragma: no cover - LAPACK failure
        raise OracleError(f"radial solve failed: {exc}") from exc

    a = np.zeros(n_nodes, dtype=complex)
    a[:n] = a_free
    return a


def radial_energy(
    params: ModelParams,
    grid: RadialGrid | None = None,
    n_intervals: int = 100_000,
) -> float:
    """Reference energy: sum over intervals of pi rho_mid drho |A'|^2 / mu."""
    if grid is None:
        grid = make_radial_grid(params, n_intervals)
    a = radial_solve(params, grid)
    h = np.diff(grid.radii)
    mid = grid.radii[:-1] + 0.5 * h
    mu = _interval_mu(grid, params)
    da = np.abs(np.diff(a) / h) ** 2
    return float(np.sum(math.pi * mid * h * da / mu))


def ampere_flux(
    params: ModelParams, grid: RadialGrid, a: np.ndarray, rho: float
) -> float:
    """Discrete circulation 2 pi rho H_phi at radius rho (real part).

    For sigma = 0 between the wire and the tube this equals the enclosed
    current i0 up to discretization error.
    """
    i = int(np.searchsorted(grid.radii, rho) - 1)
    i = min(max(i, 0), grid.n_intervals - 1)
    h = grid.radii[i + 1] - grid.radii[i]
    mid = grid.radii[i] + 0.5 * h
    mu = _interval_mu(grid, params)[i]
    h_phi = -(a[i + 1] - a[i]) / h / mu
    return float(np.real(2.0 * math.pi * mid * h_phi))


def closed_form_energy_sigma0(params: ModelParams) -> float:
    """Energy for sigma = 0 from the circulation law H_phi = i0/(2 pi rho):

        mu0 i0^2/(16 pi)                      (wire)
      + mu0 i0^2/(4 pi) ln(r1/r0)             (air)
      + mu3 mu0 i0^2/(4 pi) ln(r2/r1)         (tube)
    """
    scale = MU0 * params.i0**2 / (4.0 * math.pi)
    return (
        scale / 4.0
        + scale * math.log(params.r1 / params.r0)
        + scale * params.mu3 * math.log(params.r2 / params.r1)
    )


def reference_mean(
    fixed: ModelParams,
    dists: ParameterDistributions,
    quad_order: int = 8,
    n_intervals: int = 100_000,
) -> float:
    """Tensor Gauss-Legendre estimate of E[W] over the parameter box.

    Runs quad_order^3 radial solves; converges rapidly because the energy
    is smooth in (r1, i0, mu3).
    """
    if quad_order < 4:
        raise ValueError("quad_order must be >= 4")
    x, w = np.polynomial.legendre.leggauss(quad_order)
    half = w / 2.0  # uniform expectation weight on [-1, 1]

    total = 0.0
    for xr, wr in zip(x, half):
        r1 = dists.r1_nominal + dists.r1_halfwidth * xr
        grid_params = dataclasses.replace(fixed, r1=r1)
        grid = make_radial_grid(grid_params, n_intervals)
        for xi, wi in zip(x, half):
            i0 = dists.i0_nominal + dists.i0_halfwidth * xi
            for xm, wm in zip(x, half):
                mu3 = dists.mu3_nominal + dists.mu3_halfwidth * xm
                p = dataclasses.replace(fixed, r1=r1, i0=i0, mu3=mu3)
                total += wr * wi * wm * radial_energy(p, grid)
    return total
