import math
import random

import numpy as np
import pytest

from crossdock.errors import GridOverflowError, NoAtomsError, ParameterError
from crossdock.grid import (
    LIGAND,
    RECEPTOR,
    GridSpec,
    ScoringParams,
    assign_grid,
    choose_grid_size,
    dump_grid,
    is_radix_friendly,
    load_grid,
    next_radix_friendly,
)
from crossdock.pdb_io import AtomRecord, Structure

from conftest import make_structure, single_atom


def smooth_numbers_oracle(limit: int) -> list[int]:
    """Every 2^a * 3^b * 5^c <= limit, by exhaustive enumeration."""
    out = set()
    a = 1
    while a <= limit:
        b = a
        while b <= limit:
            c = b
            while c <= limit:
                out.add(c)
                c *= 5
            b *= 3
        a *= 2
    return sorted(out)


def span_structure(sid: str, span: float) -> Structure:
    atoms = (
        AtomRecord(1, "CA", "ALA", "A", 1, 0.0, 0.0, 0.0, "C"),
        AtomRecord(2, "CA", "ALA", "A", 2, span, 0.0, 0.0, "C"),
    )
    return Structure(id=sid, atoms=atoms)


class TestChooseGridSize:
    def test_spans_24_and_12_margin_1_gives_32(self):
        spec = choose_grid_size(span_structure("r", 24.0), span_structure("l", 12.0),
                                pitch=1.2, margin_voxels=1)
        assert spec.n == 32

    def test_requirement_33_rounds_to_36(self):
        # spans summing to 39.6 A at pitch 1.2 need 33 voxels + 0 margin
        spec = choose_grid_size(span_structure("r", 24.0), span_structure("l", 15.6),
                                pitch=1.2, margin_voxels=0)
        assert math.ceil((24.0 + 15.6) / 1.2) == 33
        assert spec.n == 36

    def test_two_single_atoms_margin_4_matches_enumeration_oracle(self):
        spec = choose_grid_size(single_atom("a"), single_atom("b"),
                                pitch=1.2, margin_voxels=4)
        required = 0 + 2 * 4
        oracle = min(m for m in smooth_numbers_oracle(64) if m >= required)
        assert oracle == 8  # frozen from the oracle
        assert spec.n == oracle

    def test_origin_centers_receptor_box(self):
        rec = span_structure("r", 24.0)
        spec = choose_grid_size(rec, single_atom("l", 0, 0, 0), 1.2, 2)
        np.testing.assert_allclose(spec.center(), [12.0, 0.0, 0.0])

    def test_rule_and_radix_invariant_random(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            rspan = float(rng.uniform(0, 60))
            lspan = float(rng.uniform(0, 40))
            pitch = float(rng.uniform(0.5, 2.0))
            margin = int(rng.integers(0, 8))
            spec = choose_grid_size(span_structure("r", rspan), span_structure("l", lspan),
                                    pitch, margin)
            required = math.ceil((rspan + lspan) / pitch) + 2 * margin
            assert spec.n >= required
            assert is_radix_friendly(spec.n)
            # minimal: no smaller 5-smooth integer >= max(required, 4)
            smaller = [m for m in smooth_numbers_oracle(spec.n - 1) if m >= max(required, 4)]
            assert not smaller

    def test_empty_structure_rejected(self):
        with pytest.raises(NoAtomsError):
            choose_grid_size(Structure(id="e", atoms=()), single_atom("l"), 1.2, 1)

    def test_bad_pitch_rejected(self):
        with pytest.raises(ParameterError):
            choose_grid_size(single_atom("a"), single_atom("b"), 0.0, 1)


def test_next_radix_friendly_against_oracle():
    smooth = set(smooth_numbers_oracle(3000))
    for n in range(1, 2000):
        got = next_radix_friendly(n)
        assert got in smooth and got >= n
        assert not any(m in smooth for m in range(n, got))


def test_gridspec_rejects_non_smooth_and_small():
    with pytest.raises(ParameterError):
        GridSpec(n=33, pitch=1.2, origin=(0.0, 0.0, 0.0))
    with pytest.raises(ParameterError):
        GridSpec(n=2, pitch=1.2, origin=(0.0, 0.0, 0.0))


def sphere_membership_oracle(spec: GridSpec, center, radius: float) -> set:
    """Triple-loop scan over every voxel center."""
    hits = set()
    for i in range(spec.n):
        for j in range(spec.n):
            for k in range(spec.n):
                cx = spec.origin[0] + i * spec.pitch
                cy = spec.origin[1] + j * spec.pitch
                cz = spec.origin[2] + k * spec.pitch
                d2 = (cx - center[0]) ** 2 + (cy - center[1]) ** 2 + (cz - center[2]) ** 2
                if d2 <= radius * radius:
                    hits.add((i, j, k))
    return hits


def chebyshev_dilation_oracle(cells: set, thickness: int, n: int) -> set:
    """Brute-force set expansion, clipped at the grid boundary."""
    out = set(cells)
    for _ in range(thickness):
        grown = set(out)
        for (i, j, k) in out:
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        p = (i + di, j + dj, k + dk)
                        if 0 <= p[0] < n and 0 <= p[1] < n and 0 <= p[2] < n:
                            grown.add(p)
        out = grown
    return out


class TestAssignGrid:
    def test_single_atom_ligand_matches_sphere_oracle(self):
        spec = GridSpec(n=9, pitch=1.2, origin=(-4.8, -4.8, -4.8))
        s = single_atom("one", 0.0, 0.0, 0.0)
        grid = assign_grid(s, spec, LIGAND)
        got = {tuple(idx) for idx in np.argwhere(grid.voxels.real == 1.0)}
        want = sphere_membership_oracle(spec, (0.0, 0.0, 0.0), 1.5)
        assert got == want
        assert len(want) == 7  # plus-shape at 1.2 A pitch, 1.5 A radius

    def test_far_region_is_zero(self):
        spec = GridSpec(n=16, pitch=1.2, origin=(0.0, 0.0, 0.0))
        s = single_atom("one", 2.4, 2.4, 2.4)
        grid = assign_grid(s, spec, LIGAND)
        assert np.all(grid.voxels[8:, 8:, 8:] == 0)

    def test_receptor_surface_matches_dilation_oracle(self):
        spec = GridSpec(n=9, pitch=1.2, origin=(-4.8, -4.8, -4.8))
        s = single_atom("one", 0.0, 0.0, 0.0)
        params = ScoringParams()
        grid = assign_grid(s, spec, RECEPTOR, params)
        core = sphere_membership_oracle(spec, (0.0, 0.0, 0.0), params.atom_radius)
        dilated = chebyshev_dilation_oracle(core, params.surface_thickness, spec.n)
        got_surface = {tuple(i) for i in np.argwhere(grid.voxels.real == params.surface_weight)}
        got_core = {tuple(i) for i in np.argwhere(grid.voxels.real == params.receptor_core_weight)}
        assert got_core == core
        assert got_surface == dilated - core
        assert len(got_surface) == len(dilated) - len(core)

    def test_receptor_surface_thickness_two(self):
        spec = GridSpec(n=12, pitch=1.2, origin=(-6.0, -6.0, -6.0))
        params = ScoringParams(surface_thickness=2)
        s = single_atom("one", 0.6, 0.6, 0.6)
        grid = assign_grid(s, spec, RECEPTOR, params)
        core = sphere_membership_oracle(spec, (0.6, 0.6, 0.6), params.atom_radius)
        dilated = chebyshev_dilation_oracle(core, 2, spec.n)
        got_surface = {tuple(i) for i in np.argwhere(grid.voxels.real == 1.0)}
        assert got_surface == dilated - core

    def test_multi_atom_receptor_matches_oracles(self):
        spec = GridSpec(n=16, pitch=1.2, origin=(-9.0, -9.0, -9.0))
        rng = np.random.default_rng(3)
        coords = rng.uniform(-3.0, 3.0, (5, 3))
        atoms = tuple(
            AtomRecord(i + 1, "CA", "ALA", "A", i + 1,
                       float(c[0]), float(c[1]), float(c[2]), "C")
            for i, c in enumerate(coords)
        )
        s = Structure(id="m", atoms=atoms)
        params = ScoringParams()
        grid = assign_grid(s, spec, RECEPTOR, params)
        core = set()
        for c in coords:
            core |= sphere_membership_oracle(spec, c, params.atom_radius)
        dilated = chebyshev_dilation_oracle(core, 1, spec.n)
        got_core = {tuple(i) for i in np.argwhere(grid.voxels.real == -15.0)}
        got_surface = {tuple(i) for i in np.argwhere(grid.voxels.real == 1.0)}
        assert got_core == core
        assert got_surface == dilated - core

    def test_value_sets_per_role(self):
        spec = GridSpec(n=10, pitch=1.2, origin=(-5.4, -5.4, -5.4))
        s = make_structure("s", [(0, 0, 0), (1, 0, 0)])
        rec = assign_grid(s, spec, RECEPTOR)
        lig = assign_grid(s, spec, LIGAND)
        assert set(np.unique(rec.voxels.real)) <= {0.0, 1.0, -15.0}
        assert set(np.unique(lig.voxels.real)) <= {0.0, 1.0}
        assert np.all(rec.voxels.imag == 0.0)
        assert np.all(lig.voxels.imag == 0.0)

    def test_surface_and_core_disjoint_and_adjacent(self):
        spec = GridSpec(n=12, pitch=1.2, origin=(-6.0, -6.0, -6.0))
        s = make_structure("s", [(0, 0, 0), (0, 1, 0)])
        grid = assign_grid(s, spec, RECEPTOR)
        core = {tuple(i) for i in np.argwhere(grid.voxels.real == -15.0)}
        surface = {tuple(i) for i in np.argwhere(grid.voxels.real == 1.0)}
        assert not (core & surface)
        for cell in surface:
            assert any(
                max(abs(cell[0] - c[0]), abs(cell[1] - c[1]), abs(cell[2] - c[2])) <= 1
                for c in core
            )

    def test_deterministic_bit_identical(self):
        spec = GridSpec(n=15, pitch=1.2, origin=(-8.0, -8.0, -8.0))
        rng = np.random.default_rng(11)
        coords = rng.uniform(-4, 4, (20, 3))
        atoms = tuple(
            AtomRecord(i + 1, "CA", "ALA", "A", i + 1,
                       float(c[0]), float(c[1]), float(c[2]), "C")
            for i, c in enumerate(coords)
        )
        s = Structure(id="d", atoms=atoms)
        a = assign_grid(s, spec, RECEPTOR)
        b = assign_grid(s, spec, RECEPTOR)
        assert np.array_equal(a.voxels, b.voxels)

    def test_translation_equivariance_on_dyadic_lattice(self):
        # dyadic pitch/coords make shifted distances bit-exact
        rng = random.Random(17)
        for trial in range(20):
            pitch = rng.choice([0.5, 1.0, 2.0])
            n = 16
            spec = GridSpec(n=n, pitch=pitch, origin=(0.0, 0.0, 0.0))
            pts = [
                (rng.randrange(16, 32) * 0.25, rng.randrange(16, 32) * 0.25,
                 rng.randrange(16, 32) * 0.25)
                for _ in range(4)
            ]
            atoms = tuple(
                AtomRecord(i + 1, "CA", "ALA", "A", i + 1, *p, "C")
                for i, p in enumerate(pts)
            )
            s = Structure(id="t", atoms=atoms)
            k = rng.choice([1, 2, 3])
            axis = rng.randrange(3)
            shift = [0.0, 0.0, 0.0]
            shift[axis] = k * pitch
            moved = s.with_coords(s.coords() + np.array(shift))
            base = assign_grid(s, spec, LIGAND)
            shifted = assign_grid(moved, spec, LIGAND)
            np.testing.assert_array_equal(
                np.roll(base.voxels, k, axis=axis), shifted.voxels,
                err_msg=f"trial {trial}: pitch={pitch} k={k} axis={axis}",
            )

    def test_atom_outside_grid_names_serial(self):
        spec = GridSpec(n=8, pitch=1.2, origin=(0.0, 0.0, 0.0))
        s = single_atom("far", 50.0, 0.0, 0.0)
        with pytest.raises(GridOverflowError) as err:
            assign_grid(s, spec, LIGAND)
        assert err.value.serial == 1

    def test_empty_structure_rejected(self):
        spec = GridSpec(n=8, pitch=1.2, origin=(0.0, 0.0, 0.0))
        with pytest.raises(NoAtomsError):
            assign_grid(Structure(id="e", atoms=()), spec, LIGAND)


def test_grid_dump_round_trip(tmp_path):
    spec = GridSpec(n=8, pitch=1.2, origin=(-4.2, 0.0, 3.3))
    s = single_atom("one", -1.0, 3.0, 6.0)
    grid = assign_grid(s, spec, RECEPTOR)
    path = tmp_path / "grid.bin"
    dump_grid(grid, path)
    back = load_grid(path)
    assert back.spec == grid.spec
    assert back.role == grid.role
    assert np.array_equal(back.voxels, grid.voxels)


def test_grid_dump_is_x_fastest(tmp_path):
    spec = GridSpec(n=4, pitch=1.0, origin=(0.0, 0.0, 0.0))
    voxels = np.zeros((4, 4, 4), dtype=np.complex128)
    voxels[1, 0, 0] = 2.0 + 0j  # x index 1 -> second pair in the stream
    voxels[0, 0, 1] = 0 + 3.0j  # z index 1 -> pair 16
    from crossdock.grid import DockGrid

    path = tmp_path / "g.bin"
    dump_grid(DockGrid(spec=spec, voxels=voxels, role=LIGAND), path)
    raw = path.read_bytes()
    payload = raw.split(b"\n", 1)[1]
    values = np.frombuffer(payload, dtype="<f8")
    assert values[2] == 2.0  # pair 1 (x fastest), real part
    assert values[2 * 16 + 1] == 3.0  # pair 16, imaginary part
