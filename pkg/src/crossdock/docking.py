"""Rigid-body docking: rotation sampling plus FFT grid correlation.

For every sampled rotation the ligand is rotated about its bounding-box
center, rasterized onto the shared grid, and correlated against the receptor
grid over all cyclic voxel translations in one FFT pass. The best-scoring
placements are merged into a global top-K list under a total order
(score descending, then rotation index and translation ascending), which
makes results independent of thread scheduling.

``direct_correlate`` is the brute-force oracle for the FFT path: a literal
translation scan with cyclic indexing and no transforms. Keep it that way.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridMismatchError, NoAtomsError, ParameterError
from .grid import (
    LIGAND,
    RECEPTOR,
    DockGrid,
    GridSpec,
    ScoringParams,
    assign_grid,
    choose_grid_size,
)
from .pdb_io import Structure, bounding_box

__all__ = [
    "Rotation",
    "generate_rotations",
    "rotate_structure",
    "fft_correlate",
    "direct_correlate",
    "DockConfig",
    "Pose",
    "DockingResult",
    "TimeBreakdown",
    "dock_pair",
    "profile_dock",
    "place_ligand",
]

_UNIT_TOL = 1e-9
_DEDUP_TOL = 1e-6
_ZERO_SNAP = 1e-12
_CELL_OFFSETS = [
    (dw, dx, dy, dz)
    for dw in (-1, 0, 1)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
]


@dataclass(frozen=True)
class Rotation:
    """A unit quaternion (w, x, y, z) in canonical sign form.

    Canonical form: w >= 0, and when w == 0 the first nonzero component of
    (x, y, z) is positive, so each rotation has exactly one representation.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.w**2 + self.x**2 + self.y**2 + self.z**2
        if abs(norm2 - 1.0) > 1e-9:
            raise ParameterError(f"quaternion is not unit length: |q|^2 = {norm2!r}")

    @property
    def is_identity(self) -> bool:
        return self.w == 1.0

    def components(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def matrix(self) -> np.ndarray:
        """Rotation matrix acting on column vectors."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def inverse(self) -> "Rotation":
        return canonical_rotation(self.w, -self.x, -self.y, -self.z)

    def compose(self, other: "Rotation") -> "Rotation":
        """Rotation equal to applying ``other`` first, then ``self``."""
        return canonical_rotation(*_qmul(self.components(), other.components()))

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_euler_zyz(alpha_deg: float, beta_deg: float, gamma_deg: float) -> "Rotation":
        """z-y-z Euler angles (degrees) to a canonical quaternion."""
        qa = _axis_quat("z", alpha_deg)
        qb = _axis_quat("y", beta_deg)
        qg = _axis_quat("z", gamma_deg)
        return canonical_rotation(*_qmul(_qmul(qa, qb), qg))


def _axis_quat(axis: str, angle_deg: float) -> tuple[float, float, float, float]:
    half = math.radians(angle_deg) / 2.0
    c, s = math.cos(half), math.sin(half)
    if axis == "z":
        return (c, 0.0, 0.0, s)
    if axis == "y":
        return (c, 0.0, s, 0.0)
    return (c, s, 0.0, 0.0)


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def canonical_rotation(w: float, x: float, y: float, z: float) -> Rotation:
    """Normalize and put a quaternion into canonical sign form.

    Components within 1e-12 of zero are snapped to exactly zero before the
    sign rule is applied, so near-antipodal duplicates from the Euler grid
    canonicalize consistently.
    """
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if norm == 0.0:
        raise ParameterError("zero quaternion has no rotation")
    comps = [w / norm, x / norm, y / norm, z / norm]
    comps = [0.0 if abs(c) < _ZERO_SNAP else c for c in comps]
    norm = math.sqrt(sum(c * c for c in comps))
    comps = [c / norm for c in comps]
    for c in comps:
        if c != 0.0:
            if c < 0.0:
                comps = [-v for v in comps]
            break
    return Rotation(*comps)


def generate_rotations(angular_step: float) -> list[Rotation]:
    """Unique rotations from the uniform z-y-z Euler grid with the given step.

    alpha and gamma run over [0, 360), beta over [0, 180]; duplicates (same
    rotation from different Euler triples) are removed with a 1e-6 tolerance.
    The result is sorted by quaternion components, so the order and the
    rotation indices are deterministic.
    """
    if not (0.0 < angular_step <= 120.0):
        raise ParameterError(f"angular step must be in (0, 120], got {angular_step}")
    turns = 360.0 / angular_step
    if abs(turns - round(turns)) > 1e-9:
        raise ParameterError(f"angular step {angular_step} does not divide 360 evenly")

    n_full = int(round(turns))
    alphas = [i * angular_step for i in range(n_full)]
    betas = [i * angular_step for i in range(n_full) if i * angular_step <= 180.0 + 1e-9]
    quats = [
        Rotation.from_euler_zyz(a, b, g).components()
        for a in alphas
        for b in betas
        for g in alphas
    ]
    quats.sort()

    # Componentwise duplicates within the tolerance can straddle unrelated
    # elements in sort order, so dedupe through a grid hash: a duplicate of
    # a kept quaternion always lies in the same or a neighboring cell.
    unique: list[Rotation] = []
    cells: dict[tuple[int, int, int, int], list[tuple[float, ...]]] = {}
    for q in quats:
        cell = tuple(math.floor(c / _DEDUP_TOL) for c in q)
        dup = False
        for offset in _CELL_OFFSETS:
            bucket = cells.get(
                (cell[0] + offset[0], cell[1] + offset[1],
                 cell[2] + offset[2], cell[3] + offset[3])
            )
            if bucket and any(
                max(abs(q[i] - kept[i]) for i in range(4)) <= _DEDUP_TOL
                for kept in bucket
            ):
                dup = True
                break
        if not dup:
            cells.setdefault(cell, []).append(q)
            unique.append(Rotation(*q))
    return unique


def rotate_structure(s: Structure, r: Rotation, center) -> Structure:
    """Rotate every atom of ``s`` about ``center`` by ``r``.

    Atom order and identities are unchanged; the identity rotation returns
    the coordinates untouched (bit for bit).
    """
    if not s.atoms:
        raise NoAtomsError(f"structure {s.id!r} has no atoms")
    if r.is_identity:
        return Structure(id=s.id, atoms=s.atoms, source_path=s.source_path)
    c = np.asarray(center, dtype=np.float64)
    coords = (s.coords() - c) @ r.matrix().T + c
    return s.with_coords(coords)


def fft_correlate(receptor: DockGrid, ligand: DockGrid) -> np.ndarray:
    """Correlation volume C(t) = sum_v Re[conj(R(v)) * L(v + t)] over all
    cyclic voxel translations t, via the transform pair. The inverse
    transform's 1/n^3 factor makes C match the direct sum exactly."""
    if receptor.spec != ligand.spec:
        raise GridMismatchError(
            f"grids disagree: {receptor.spec} vs {ligand.spec}"
        )
    spectrum = np.conj(np.fft.fftn(receptor.voxels)) * np.fft.fftn(ligand.voxels)
    return np.real(np.fft.ifftn(spectrum))


def direct_correlate(receptor: DockGrid, ligand: DockGrid) -> np.ndarray:
    """Brute-force oracle for fft_correlate: a literal translation scan with
    cyclic indexing and no transforms. O(n^6); intended for n <= 16."""
    if receptor.spec != ligand.spec:
        raise GridMismatchError(
            f"grids disagree: {receptor.spec} vs {ligand.spec}"
        )
    n = receptor.spec.n
    rc = np.conj(receptor.voxels)
    lig = ligand.voxels
    out = np.empty((n, n, n), dtype=np.float64)
    for tx in range(n):
        lx = np.roll(lig, -tx, axis=0)
        for ty in range(n):
            lxy = np.roll(lx, -ty, axis=1)
            for tz in range(n):
                out[tx, ty, tz] = np.sum(rc * np.roll(lxy, -tz, axis=2)).real
    return out


@dataclass(frozen=True)
class DockConfig:
    """Knobs for one docking run; every field has a usable default."""

    pitch: float = 1.2
    margin_voxels: int = 4
    angular_step: float = 15.0
    top_k: int = 2000
    params: ScoringParams = field(default_factory=ScoringParams)
    threads: int = 0  # 0 = use all logical cores

    def validate(self) -> None:
        if self.pitch <= 0:
            raise ParameterError(f"pitch must be > 0, got {self.pitch}")
        if self.margin_voxels < 0:
            raise ParameterError(f"margin_voxels must be >= 0, got {self.margin_voxels}")
        if self.top_k < 1:
            raise ParameterError(f"top_k must be >= 1, got {self.top_k}")
        if self.threads < 0:
            raise ParameterError(f"threads must be >= 0, got {self.threads}")

    def resolved_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return {
            "pitch": self.pitch,
            "margin_voxels": self.margin_voxels,
            "angular_step": self.angular_step,
            "top_k": self.top_k,
            "params": self.params.to_dict(),
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DockConfig":
        cfg = cls(
            pitch=float(d.get("pitch", 1.2)),
            margin_voxels=int(d.get("margin_voxels", 4)),
            angular_step=float(d.get("angular_step", 15.0)),
            top_k=int(d.get("top_k", 2000)),
            params=ScoringParams.from_dict(d["params"]) if "params" in d else ScoringParams(),
            threads=int(d.get("threads", 0)),
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class Pose:
    """One rigid-body placement: rotation index into the rotation set plus a
    cyclic voxel translation, with its score."""

    rotation_index: int
    tx: int
    ty: int
    tz: int
    score: float

    def sort_key(self):
        # Total order: score descending, then indices ascending.
        return (-self.score, self.rotation_index, self.tx, self.ty, self.tz)

    def to_dict(self) -> dict:
        return {
            "rotation_index": self.rotation_index,
            "tx": self.tx,
            "ty": self.ty,
            "tz": self.tz,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(
            rotation_index=int(d["rotation_index"]),
            tx=int(d["tx"]),
            ty=int(d["ty"]),
            tz=int(d["tz"]),
            score=float(d["score"]),
        )


@dataclass(frozen=True)
class DockingResult:
    task_id: str
    receptor_id: str
    ligand_id: str
    grid_spec: GridSpec
    params: ScoringParams
    angular_step: float
    top_poses: tuple[Pose, ...]
    best_score: float
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "receptor_id": self.receptor_id,
            "ligand_id": self.ligand_id,
            "grid": self.grid_spec.to_dict(),
            "params": self.params.to_dict(),
            "angular_step": self.angular_step,
            "top_poses": [p.to_dict() for p in self.top_poses],
            "best_score": self.best_score,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DockingResult":
        return cls(
            task_id=d["task_id"],
            receptor_id=d["receptor_id"],
            ligand_id=d["ligand_id"],
            grid_spec=GridSpec.from_dict(d["grid"]),
            params=ScoringParams.from_dict(d["params"]),
            angular_step=float(d["angular_step"]),
            top_poses=tuple(Pose.from_dict(p) for p in d["top_poses"]),
            best_score=float(d["best_score"]),
            wall_time=float(d["wall_time"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_tsv_line(self) -> str:
        return "\t".join(
            [
                self.task_id,
                self.receptor_id,
                self.ligand_id,
                str(self.grid_spec.n),
                repr(self.best_score),
                f"{self.wall_time:.3f}",
            ]
        )


TSV_HEADER = "task_id\treceptor_id\tligand_id\tn\tbest_score\twall_time_s"


@dataclass
class TimeBreakdown:
    """Wall-time accounting for one docking run, in seconds."""

    transform: float = 0.0
    voxelize: float = 0.0
    rotate: float = 0.0
    reduce: float = 0.0
    other: float = 0.0
    total: float = 0.0

    def buckets(self) -> dict[str, float]:
        return {
            "transform": self.transform,
            "voxelize": self.voxelize,
            "rotate": self.rotate,
            "reduce": self.reduce,
            "other": self.other,
        }

    def fraction(self, bucket: str) -> float:
        return self.buckets()[bucket] / self.total if self.total > 0 else 0.0


class _TopK:
    """Bounded best-K set under the Pose total order.

    heapq keeps the *worst* kept entry at the root by storing the inverted
    key (score, -rotation, -tx, -ty, -tz); the kept set depends only on the
    multiset of candidates, never on insertion order.
    """

    def __init__(self, k: int):
        self.k = k
        self._heap: list[tuple] = []

    def worst_inv_key(self):
        return self._heap[0][:5] if len(self._heap) == self.k else None

    def offer(self, inv_key: tuple) -> bool:
        """inv_key = (score, -ri, -tx, -ty, -tz). Returns False once the
        candidate (and everything worse) can be discarded."""
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, inv_key)
            return True
        if inv_key <= self._heap[0]:
            return False
        heapq.heapreplace(self._heap, inv_key)
        return True

    def sorted_poses(self) -> list[Pose]:
        out = []
        for score, nri, ntx, nty, ntz in sorted(self._heap, reverse=True):
            out.append(Pose(-nri, -ntx, -nty, -ntz, float(score)))
        return out


def _best_candidates(volume: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices and scores of the k best entries of one correlation
    volume, ordered by score descending then flat index ascending (flat
    index ascending is (tx, ty, tz) ascending for the [x, y, z] layout)."""
    neg = -volume.ravel()
    k = min(k, neg.size)
    if k == neg.size:
        sel = np.arange(neg.size)
    else:
        kth = np.partition(neg, k - 1)[k - 1]
        sel = np.flatnonzero(neg <= kth)
    order = np.lexsort((sel, neg[sel]))[:k]
    idx = sel[order]
    return idx, volume.ravel()[idx]


def _dock(
    receptor: Structure,
    ligand: Structure,
    config: DockConfig,
    timings: dict | None = None,
) -> DockingResult:
    config.validate()
    t_start = time.perf_counter()

    def clock(bucket: str, t0: float) -> float:
        t1 = time.perf_counter()
        if timings is not None:
            timings[bucket] = timings.get(bucket, 0.0) + (t1 - t0)
        return t1

    t0 = time.perf_counter()
    spec = choose_grid_size(receptor, ligand, config.pitch, config.margin_voxels)
    rotations = generate_rotations(config.angular_step)
    # The ligand docks about the grid center: its bounding-box center is
    # translated there once, rotations spin it in place, and the cyclic
    # translation does the rest. The grid-size rule sized n for exactly
    # this centered layout.
    centered = ligand.with_coords(_centered_coords(ligand, spec))
    lig_center = spec.center()
    t0 = clock("other", t0)

    rec_grid = assign_grid(receptor, spec, RECEPTOR, config.params)
    t0 = clock("voxelize", t0)
    rec_hat_conj = np.conj(np.fft.fftn(rec_grid.voxels))
    t0 = clock("transform", t0)

    n = spec.n
    n2 = n * n
    top = _TopK(config.top_k)

    def scan_rotation(ri: int) -> tuple[np.ndarray, np.ndarray]:
        t0 = time.perf_counter()
        rotated = rotate_structure(centered, rotations[ri], lig_center)
        t0 = clock("rotate", t0)
        lig_grid = assign_grid(rotated, spec, LIGAND, config.params)
        t0 = clock("voxelize", t0)
        volume = np.real(np.fft.ifftn(rec_hat_conj * np.fft.fftn(lig_grid.voxels)))
        t0 = clock("transform", t0)
        idx, scores = _best_candidates(volume, config.top_k)
        clock("reduce", t0)
        return idx, scores

    def merge(ri: int, idx: np.ndarray, scores: np.ndarray) -> None:
        t0 = time.perf_counter()
        for flat, score in zip(idx.tolist(), scores.tolist()):
            tx, rem = divmod(flat, n2)
            ty, tz = divmod(rem, n)
            if not top.offer((score, -ri, -tx, -ty, -tz)):
                break  # candidates arrive best-first; the rest are worse
        clock("reduce", t0)

    workers = config.resolved_threads()
    if workers <= 1 or len(rotations) == 1:
        for ri in range(len(rotations)):
            idx, scores = scan_rotation(ri)
            merge(ri, idx, scores)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for ri, (idx, scores) in enumerate(pool.map(scan_rotation, range(len(rotations)))):
                merge(ri, idx, scores)

    poses = tuple(top.sorted_poses())
    wall = time.perf_counter() - t_start
    if timings is not None:
        timings["total"] = wall
    return DockingResult(
        task_id=f"{receptor.id}__{ligand.id}",
        receptor_id=receptor.id,
        ligand_id=ligand.id,
        grid_spec=spec,
        params=config.params,
        angular_step=config.angular_step,
        top_poses=poses,
        best_score=poses[0].score,
        wall_time=wall,
    )


def _centered_coords(ligand: Structure, spec: GridSpec) -> np.ndarray:
    """Ligand coordinates with the bounding-box center moved onto the grid
    center, which is where dock_pair rotates it."""
    lo, hi = bounding_box(ligand)
    return ligand.coords() + (spec.center() - (lo + hi) / 2.0)


def place_ligand(
    result: DockingResult,
    pose: Pose,
    ligand: Structure,
    wrap: bool = True,
) -> np.ndarray:
    """Atom coordinates of ``ligand`` in the placement that ``pose`` scores.

    The correlation samples the rotated ligand grid at v + t, so a pose
    moves the centered, rotated ligand by -t voxels; with ``wrap`` the
    coordinates are folded cyclically into the grid box. ``ligand`` must be
    the structure that was passed to dock_pair.
    """
    spec = result.grid_spec
    rot = generate_rotations(result.angular_step)[pose.rotation_index]
    center = spec.center()
    coords = _centered_coords(ligand, spec)
    coords = (coords - center) @ rot.matrix().T + center
    coords = coords - np.array([pose.tx, pose.ty, pose.tz]) * spec.pitch
    if wrap:
        box_lo = np.asarray(spec.origin) - spec.pitch / 2.0
        coords = (coords - box_lo) % (spec.n * spec.pitch) + box_lo
    return coords


def dock_pair(receptor: Structure, ligand: Structure, config: DockConfig | None = None) -> DockingResult:
    """Dock ``ligand`` against ``receptor`` over all sampled rotations and
    cyclic translations; returns the global top-K poses.

    The receptor grid and its transform are built exactly once. Results are
    bit-identical across runs and across thread counts (wall_time aside).
    The margin must absorb the ligand's rotation sweep: a very elongated
    ligand against a much smaller receptor can overflow the grid, which
    raises GridOverflowError naming the atom.
    """
    return _dock(receptor, ligand, config or DockConfig())


def profile_dock(
    receptor: Structure,
    ligand: Structure,
    config: DockConfig | None = None,
) -> TimeBreakdown:
    """Run dock_pair accumulating wall time into buckets
    {transform, voxelize, rotate, reduce, other}.

    Forces a single worker thread so that bucket times are additive and sum
    to the total (within measurement noise)."""
    config = replace(config or DockConfig(), threads=1)
    timings: dict[str, float] = {}
    _dock(receptor, ligand, config, timings=timings)
    named = {
        k: timings.get(k, 0.0)
        for k in ("transform", "voxelize", "rotate", "reduce", "other")
    }
    total = timings["total"]
    named["other"] += max(total - sum(named.values()), 0.0)
    return TimeBreakdown(total=total, **named)
