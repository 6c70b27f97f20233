"""Structured polar triangulations of the wire/air/tube disk.

Nodes sit on concentric rings: one center node, then ``n_theta`` nodes per
ring.  Ring radii are chosen per region so that the material interfaces
``r0`` and ``r1`` and the outer boundary ``r2`` are rings at every level;
each quadrilateral cell between consecutive rings is split into two
triangles.  Refinement from level ``l`` to ``l+1`` doubles ``n_theta`` and
every radial count, halving the mesh width in both directions.

Tube radii are graded toward the inner tube wall (where the eddy-current
skin layer lives) through a fixed exponential map: at the coarsest level
consecutive radial cells grow by ``TUBE_GRADING`` per cell, and finer
levels subdivide the same map uniformly in its parameter, so rings of
level ``l`` are a subset of the rings of level ``l+1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import ModelParams

REGION_WIRE = 1
REGION_AIR = 2
REGION_TUBE = 3

# Ratio of consecutive radial cell widths in the tube at the base level.
# 1.5 puts the first coarse-level ring about 2/3 of a nominal skin depth
# from the inner tube wall; milder grading leaves the skin layer so badly
# resolved at level 0 that the level-1 correction carries ~20% of the
# total variance and the coarsest level no longer dominates the MLMC cost.
TUBE_GRADING = 1.5

_BASE_N_THETA = 16
_BASE_N_WIRE = 2
_BASE_N_AIR = 4
_BASE_N_TUBE = 4


class MeshError(RuntimeError):
    """Degenerate geometry or broken mesh invariant."""


@dataclass(frozen=True)
class LevelSpec:
    """Resolution of one refinement level (factor-2 per level)."""

    level: int
    n_theta: int
    n_r_wire: int
    n_r_air: int
    n_r_tube: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        scale = 1 << self.level
        for name in ("n_theta", "n_r_wire", "n_r_air", "n_r_tube"):
            n = getattr(self, name)
            if n < scale or n % scale != 0:
                raise ValueError(
                    f"{name}={n} is not a positive multiple of 2^level={scale}"
                )
        if self.n_theta < 3:
            raise ValueError("n_theta must be >= 3")

    @classmethod
    def for_level(cls, level: int, base: "LevelSpec | None" = None) -> "LevelSpec":
        """Level-``l`` spec scaled up from the base (level-0) resolution."""
        if base is None:
            base = cls(0, _BASE_N_THETA, _BASE_N_WIRE, _BASE_N_AIR, _BASE_N_TUBE)
        if base.level != 0:
            raise ValueError("base spec must be at level 0")
        scale = 1 << level
        return cls(
            level=level,
            n_theta=base.n_theta * scale,
            n_r_wire=base.n_r_wire * scale,
            n_r_air=base.n_r_air * scale,
            n_r_tube=base.n_r_tube * scale,
        )

    @property
    def n_rings(self) -> int:
        return self.n_r_wire + self.n_r_air + self.n_r_tube

    @property
    def node_count(self) -> int:
        return 1 + self.n_theta * self.n_rings


def dof_count(spec: LevelSpec) -> int:
    """Unconstrained node count (outer-ring nodes carry Dirichlet data)."""
    return spec.node_count - spec.n_theta


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with region tags.

    ``triangles`` rows are CCW node index triples; ``regions`` holds the
    matching material tag; ``boundary_nodes`` are the outer-ring nodes.
    Arrays are read-only and shared between meshes where possible.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_nodes: np.ndarray
    dof_count: int
    spec: LevelSpec
    r0: float
    r1: float
    r2: float


@lru_cache(maxsize=64)
def _angles(n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    cos, sin = np.cos(theta), np.sin(theta)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


@lru_cache(maxsize=64)
def _topology(n_theta: int, n_wire: int, n_air: int, n_tube: int):
    """Triangle connectivity, region tags and boundary nodes (shape only)."""
    n_rings = n_wire + n_air + n_tube
    j = np.arange(n_theta, dtype=np.int32)
    jp = np.roll(j, -1)  # azimuthal neighbor with wraparound

    tris = [np.column_stack([np.zeros(n_theta, np.int32), 1 + j, 1 + jp])]
    regions = [np.full(n_theta, REGION_WIRE, np.int8)]
    for k in range(1, n_rings):
        inner = 1 + (k - 1) * n_theta
        outer = 1 + k * n_theta
        a, b = inner + j, inner + jp
        c, d = outer + j, outer + jp
        tris.append(np.column_stack([a, c, d]))
        tris.append(np.column_stack([a, d, b]))
        if k < n_wire:
            tag = REGION_WIRE
        elif k < n_wire + n_air:
            tag = REGION_AIR
        else:
            tag = REGION_TUBE
        regions.append(np.full(2 * n_theta, tag, np.int8))

    triangles = np.vstack(tris)
    region_arr = np.concatenate(regions)
    boundary = np.arange(1 + (n_rings - 1) * n_theta, 1 + n_rings * n_theta,
                         dtype=np.int32)
    for arr in (triangles, region_arr, boundary):
        arr.setflags(write=False)
    return triangles, region_arr, boundary


def _tube_radii(r1: float, r2: float, n: int, base_n: int) -> np.ndarray:
    """Graded ring radii in (r1, r2]; smallest cells at the inner wall."""
    t = np.arange(1, n + 1) / n
    strength = TUBE_GRADING**base_n
    if base_n <= 1 or TUBE_GRADING == 1.0:
        frac = t
    else:
        frac = (strength**t - 1.0) / (strength - 1.0)
    radii = r1 + (r2 - r1) * frac
    radii[-1] = r2
    return radii


def ring_radii(params: ModelParams, spec: LevelSpec) -> np.ndarray:
    """All ring radii (ascending), with r0, r1, r2 as exact entries."""
    wire = params.r0 * np.arange(1, spec.n_r_wire + 1) / spec.n_r_wire
    wire[-1] = params.r0
    air = params.r0 + (params.r1 - params.r0) * np.arange(
        1, spec.n_r_air + 1) / spec.n_r_air
    air[-1] = params.r1
    tube = _tube_radii(params.r1, params.r2, spec.n_r_tube,
                       spec.n_r_tube >> spec.level)
    return np.concatenate([wire, air, tube])


def build_mesh(params: ModelParams, spec: LevelSpec) -> Mesh:
    """Level-``spec.level`` mesh of the disk for the given geometry.

    Raises MeshError when a region is thinner than the mean radial cell
    width of the level (the sampled interface would produce needle cells).
    """
    h_mean = params.r2 / spec.n_rings
    if (params.r1 - params.r0) < h_mean or (params.r2 - params.r1) < h_mean:
        raise MeshError(
            f"r1={params.r1} leaves a region thinner than one cell width "
            f"({h_mean:.4g}) at level {spec.level}"
        )

    radii = ring_radii(params, spec)
    cos, sin = _angles(spec.n_theta)
    nodes = np.empty((spec.node_count, 2))
    nodes[0] = 0.0
    nodes[1:, 0] = np.outer(radii, cos).ravel()
    nodes[1:, 1] = np.outer(radii, sin).ravel()
    nodes.setflags(write=False)

    triangles, regions, boundary = _topology(
        spec.n_theta, spec.n_r_wire, spec.n_r_air, spec.n_r_tube)

    return Mesh(
        nodes=nodes,
        triangles=triangles,
        regions=regions,
        boundary_nodes=boundary,
        dof_count=dof_count(spec),
        spec=spec,
        r0=params.r0,
        r1=params.r1,
        r2=params.r2,
    )


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed areas of all triangles (positive for intact meshes)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True)
class QualityReport:
    min_angle_deg: float
    max_aspect: float
    degenerate_count: int


def mesh_quality(mesh: Mesh) -> QualityReport:
    """Minimum corner angle and maximum aspect ratio over all triangles.

    Aspect ratio is longest edge over twice the inradius (1 for
    equilateral).  Triangles with nonpositive area are counted as
    degenerate and excluded from the angle statistics.
    """
    p = mesh.nodes[mesh.triangles]
    e0 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    e1 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    e2 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    areas = triangle_areas(mesh)
    degenerate = int(np.sum(areas <= 0.0))

    ok = areas > 0.0
    if not np.any(ok):
        return QualityReport(0.0, math.inf, degenerate)
    a, b, c = e0[ok], e1[ok], e2[ok]
    area = areas[ok]
    # law of cosines per corner
    angles = []
    for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
        cosang = np.clip((y**2 + z**2 - x**2) / (2.0 * y * z), -1.0, 1.0)
        angles.append(np.arccos(cosang))
    min_angle = float(np.degrees(np.min(np.concatenate(angles))))
    longest = np.maximum(a, np.maximum(b, c))
    perimeter = a + b + c
    aspect = float(np.max(longest * perimeter / (4.0 * area)))
    return QualityReport(min_angle, aspect, degenerate)


def write_mesh(mesh: Mesh, path: str) -> None:
    """Plain-text dump for external visualization.

    Format, one record per line:
      ``nodes <N>`` then N lines ``index x y``;
      ``triangles <M>`` then M lines ``index n0 n1 n2 region``;
      ``boundary <K>`` then K lines ``node_index``.
    """
    with open(path, "w") as f:
        f.write(f"nodes {len(mesh.nodes)}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            f.write(f"{i} {float(x)!r} {float(y)!r}\n")
        f.write(f"triangles {len(mesh.triangles)}\n")
        for i, (tri, reg) in enumerate(zip(mesh.triangles, mesh.regions)):
            f.write(f"{i} {tri[0]} {tri[1]} {tri[2]} {reg}\n")
        f.write(f"boundary {len(mesh.boundary_nodes)}\n")
        for n in mesh.boundary_nodes:
            f.write(f"{n}\n")
