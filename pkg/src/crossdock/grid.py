"""Voxelization of structures onto cubic grids with complementarity weights.

A structure is rasterized onto an N x N x N grid of 1.2 A voxels (default).
Receptor grids carry a thin favorable surface shell (+1) around a heavily
penalized core (-15); ligand grids carry +1 inside the molecular core. The
real part of the grid correlation is then the classic shape-complementarity
score: +1 per surface contact, -15 per core clash. Imaginary parts are kept
zero and reserved for additional scoring terms.

Grid edge sizes are restricted to 5-smooth integers (2^a * 3^b * 5^c) so the
transforms stay in their fast radix paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GridOverflowError, NoAtomsError, ParameterError
from .pdb_io import Structure, bounding_box

__all__ = [
    "RECEPTOR",
    "LIGAND",
    "ScoringParams",
    "GridSpec",
    "DockGrid",
    "is_radix_friendly",
    "next_radix_friendly",
    "choose_grid_size",
    "assign_grid",
    "dump_grid",
    "load_grid",
]

RECEPTOR = "receptor"
LIGAND = "ligand"


@dataclass(frozen=True)
class ScoringParams:
    """Shape-complementarity weights and rasterization constants.

    Recorded in every docking result so scores are reproducible. The weights
    follow the classic grid-correlation convention; the atom radius is
    uniform (no per-element radii) and the surface shell is a Chebyshev
    dilation of the core, ``surface_thickness`` voxels deep.
    """

    surface_weight: float = 1.0
    receptor_core_weight: float = -15.0
    ligand_weight: float = 1.0
    atom_radius: float = 1.5
    surface_thickness: int = 1

    def __post_init__(self):
        if self.atom_radius <= 0:
            raise ParameterError(f"atom_radius must be > 0, got {self.atom_radius}")
        if self.surface_thickness < 0:
            raise ParameterError(
                f"surface_thickness must be >= 0, got {self.surface_thickness}"
            )

    def to_dict(self) -> dict:
        return {
            "surface_weight": self.surface_weight,
            "receptor_core_weight": self.receptor_core_weight,
            "ligand_weight": self.ligand_weight,
            "atom_radius": self.atom_radius,
            "surface_thickness": self.surface_thickness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoringParams":
        return cls(
            surface_weight=float(d["surface_weight"]),
            receptor_core_weight=float(d["receptor_core_weight"]),
            ligand_weight=float(d["ligand_weight"]),
            atom_radius=float(d["atom_radius"]),
            surface_thickness=int(d["surface_thickness"]),
        )


def is_radix_friendly(n: int) -> bool:
    """True when n factors only into the primes 2, 3 and 5."""
    if n < 1:
        return False
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def next_radix_friendly(n: int) -> int:
    """Smallest 5-smooth integer >= n."""
    m = max(1, n)
    while not is_radix_friendly(m):
        m += 1
    return m


@dataclass(frozen=True)
class GridSpec:
    """Cubic voxel lattice: n voxels per edge, ``origin`` is the center of
    voxel (0, 0, 0)."""

    n: int
    pitch: float
    origin: tuple[float, float, float]

    def __post_init__(self):
        if self.n < 4:
            raise ParameterError(f"grid edge must be >= 4 voxels, got {self.n}")
        if not is_radix_friendly(self.n):
            raise ParameterError(f"grid edge {self.n} is not 5-smooth")
        if self.pitch <= 0:
            raise ParameterError(f"pitch must be > 0, got {self.pitch}")

    def center(self) -> np.ndarray:
        """Coordinate of the lattice midpoint (between voxels for even n)."""
        return np.asarray(self.origin) + (self.n - 1) / 2.0 * self.pitch

    def to_dict(self) -> dict:
        return {"n": self.n, "pitch": self.pitch, "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        ox, oy, oz = d["origin"]
        return cls(n=int(d["n"]), pitch=float(d["pitch"]), origin=(float(ox), float(oy), float(oz)))


@dataclass(frozen=True)
class DockGrid:
    """Voxel weights for one structure. ``voxels`` is complex128 with shape
    (n, n, n), indexed [x, y, z]."""

    spec: GridSpec
    voxels: np.ndarray
    role: str


def choose_grid_size(
    receptor: Structure,
    ligand: Structure,
    pitch: float = 1.2,
    margin_voxels: int = 4,
) -> GridSpec:
    """Pick the docking grid for a pair.

    The edge covers the receptor's largest bounding-box edge plus the
    ligand's, plus ``margin_voxels`` of clearance on each side, rounded up to
    the next 5-smooth integer (and never below 4). The origin places the
    receptor's bounding-box center at the grid center.
    """
    if pitch <= 0:
        raise ParameterError(f"pitch must be > 0, got {pitch}")
    if margin_voxels < 0:
        raise ParameterError(f"margin_voxels must be >= 0, got {margin_voxels}")
    rec_lo, rec_hi = bounding_box(receptor)
    lig_lo, lig_hi = bounding_box(ligand)
    span = float((rec_hi - rec_lo).max() + (lig_hi - lig_lo).max())
    required = math.ceil(span / pitch) + 2 * margin_voxels
    n = next_radix_friendly(max(required, 4))
    rec_center = (rec_lo + rec_hi) / 2.0
    origin = rec_center - (n - 1) / 2.0 * pitch
    return GridSpec(n=n, pitch=pitch, origin=(float(origin[0]), float(origin[1]), float(origin[2])))


def _core_mask(s: Structure, spec: GridSpec, radius: float) -> np.ndarray:
    """Boolean (n,n,n) mask of voxels whose center lies within ``radius`` of
    any atom center. Raises GridOverflowError (naming the atom serial) when
    an atom's inflated bounding cube maps outside the voxel lattice."""
    n, pitch = spec.n, spec.pitch
    origin = np.asarray(spec.origin)
    mask = np.zeros((n, n, n), dtype=bool)
    r2 = radius * radius
    for atom in s.atoms:
        pos = np.array((atom.x, atom.y, atom.z))
        lo = [math.ceil((pos[k] - radius - origin[k]) / pitch) for k in range(3)]
        hi = [math.floor((pos[k] + radius - origin[k]) / pitch) for k in range(3)]
        if any(l < 0 for l in lo) or any(h > n - 1 for h in hi):
            raise GridOverflowError(atom.serial, "inflated atom extends outside the grid")
        if any(h < l for l, h in zip(lo, hi)):
            continue  # sphere too small to catch any voxel center on this lattice
        axes = [origin[k] + np.arange(lo[k], hi[k] + 1) * pitch - pos[k] for k in range(3)]
        d2 = (
            axes[0][:, None, None] ** 2
            + axes[1][None, :, None] ** 2
            + axes[2][None, None, :] ** 2
        )
        window = mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
        window |= d2 <= r2
    return mask


def assign_grid(
    s: Structure,
    spec: GridSpec,
    role: str,
    params: ScoringParams | None = None,
) -> DockGrid:
    """Rasterize a structure onto ``spec`` with role-dependent weights.

    Core voxels (center within ``params.atom_radius`` of an atom) get the
    role's core weight. For receptors, zero voxels within
    ``params.surface_thickness`` Chebyshev shells of the core become surface
    voxels with the surface weight. Dilation does not wrap at grid edges.
    """
    if role not in (RECEPTOR, LIGAND):
        raise ParameterError(f"role must be {RECEPTOR!r} or {LIGAND!r}, got {role!r}")
    if params is None:
        params = ScoringParams()
    if not s.atoms:
        raise NoAtomsError(f"structure {s.id!r} has no atoms")

    core = _core_mask(s, spec, params.atom_radius)
    voxels = np.zeros((spec.n, spec.n, spec.n), dtype=np.complex128)
    if role == LIGAND:
        voxels[core] = params.ligand_weight
    else:
        if params.surface_thickness > 0:
            dilated = ndimage.binary_dilation(
                core,
                structure=np.ones((3, 3, 3), dtype=bool),
                iterations=params.surface_thickness,
            )
            voxels[dilated & ~core] = params.surface_weight
        voxels[core] = params.receptor_core_weight
    return DockGrid(spec=spec, voxels=voxels, role=role)


def dump_grid(grid: DockGrid, path: str | Path) -> None:
    """Debug dump: one ASCII header line, then little-endian float64
    (re, im) pairs in x-fastest order. For oracle cross-checks only."""
    spec = grid.spec
    ox, oy, oz = spec.origin
    header = (
        f"dockgrid v1 n={spec.n} pitch={spec.pitch!r} "
        f"origin={ox!r},{oy!r},{oz!r} role={grid.role}\n"
    )
    flat = grid.voxels.ravel(order="F")  # x varies fastest
    buf = np.empty(flat.size * 2, dtype="<f8")
    buf[0::2] = flat.real
    buf[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(buf.tobytes())


def load_grid(path: str | Path) -> DockGrid:
    """Read a dump_grid file back (test helper for the dump format)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        raw = fh.read()
    fields = dict(item.split("=", 1) for item in header[2:])
    n = int(fields["n"])
    pitch = float(fields["pitch"])
    ox, oy, oz = (float(v) for v in fields["origin"].split(","))
    buf = np.frombuffer(raw, dtype="<f8")
    flat = buf[0::2] + 1j * buf[1::2]
    voxels = flat.reshape((n, n, n), order="F")
    spec = GridSpec(n=n, pitch=pitch, origin=(ox, oy, oz))
    return DockGrid(spec=spec, voxels=voxels, role=fields["role"])
