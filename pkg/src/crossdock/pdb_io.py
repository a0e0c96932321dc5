"""Read and write the fixed-column subset of the PDB format used for docking.

Only ``ATOM`` records are read. HETATM, TER, REMARK and every other record
type is skipped, and ``ENDMDL`` stops parsing, so multi-model files yield the
first model only. Alternate-location indicators are not interpreted: every
ATOM line is kept, in file order. Occupancy and B-factor columns are ignored
on input and written as constants on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import NoAtomsError, PdbParseError

__all__ = [
    "AtomRecord",
    "Structure",
    "parse_pdb",
    "load_structure",
    "bounding_box",
    "structure_to_pdb",
    "write_structure",
]

# 0-based column slices of the ATOM record (PDB format v3.3).
_SERIAL = slice(6, 11)
_NAME = slice(12, 16)
_RESNAME = slice(17, 20)
_CHAIN = slice(21, 22)
_RESSEQ = slice(22, 26)
_X = slice(30, 38)
_Y = slice(38, 46)
_Z = slice(46, 54)
_ELEMENT = slice(76, 78)


@dataclass(frozen=True)
class AtomRecord:
    """One ATOM record; coordinates in Angstroms."""

    serial: int
    atom_name: str
    residue_name: str
    chain_id: str
    residue_seq: int
    x: float
    y: float
    z: float
    element: str = ""


@dataclass(frozen=True)
class Structure:
    """An ordered list of atoms read from one file (or built in memory)."""

    id: str
    atoms: tuple[AtomRecord, ...]
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.atoms)

    def coords(self) -> np.ndarray:
        """Atom coordinates as an (n_atoms, 3) float64 array, file order."""
        out = np.empty((len(self.atoms), 3), dtype=np.float64)
        for i, a in enumerate(self.atoms):
            out[i, 0] = a.x
            out[i, 1] = a.y
            out[i, 2] = a.z
        return out

    def with_coords(self, coords: np.ndarray) -> "Structure":
        """Copy of this structure with atom coordinates replaced, order kept."""
        if coords.shape != (len(self.atoms), 3):
            raise ValueError(f"expected coords of shape ({len(self.atoms)}, 3)")
        atoms = tuple(
            AtomRecord(
                serial=a.serial,
                atom_name=a.atom_name,
                residue_name=a.residue_name,
                chain_id=a.chain_id,
                residue_seq=a.residue_seq,
                x=float(c[0]),
                y=float(c[1]),
                z=float(c[2]),
                element=a.element,
            )
            for a, c in zip(self.atoms, coords)
        )
        return Structure(id=self.id, atoms=atoms, source_path=self.source_path)


def _parse_int(line: str, col: slice, line_no: int, what: str) -> int:
    text = line[col].strip()
    try:
        return int(text)
    except ValueError:
        raise PdbParseError(line_no, f"unparseable {what} field {text!r}") from None


def _parse_coord(line: str, col: slice, line_no: int, axis: str) -> float:
    text = line[col].strip()
    try:
        value = float(text)
    except ValueError:
        raise PdbParseError(line_no, f"unparseable {axis} coordinate {text!r}") from None
    if not math.isfinite(value):
        raise PdbParseError(line_no, f"non-finite {axis} coordinate {text!r}")
    return value


def parse_pdb(text: str | Iterable[str], id: str, source_path: str = "") -> Structure:
    """Parse ATOM records out of PDB text.

    ``text`` may be a whole-file string or any iterable of lines. Raises
    PdbParseError (with the 1-based line number) for a bad ATOM line and
    NoAtomsError when no ATOM record is found.
    """
    if isinstance(text, str):
        lines: Iterable[str] = text.splitlines()
    else:
        lines = text

    atoms: list[AtomRecord] = []
    for line_no, line in enumerate(lines, start=1):
        record = line[:6].rstrip()
        if record == "ENDMDL":
            break
        if record != "ATOM":
            continue
        serial = _parse_int(line, _SERIAL, line_no, "serial")
        if serial < 0:
            raise PdbParseError(line_no, f"negative atom serial {serial}")
        atoms.append(
            AtomRecord(
                serial=serial,
                atom_name=line[_NAME].strip(),
                residue_name=line[_RESNAME].strip(),
                chain_id=line[_CHAIN] or " ",
                residue_seq=_parse_int(line, _RESSEQ, line_no, "resSeq"),
                x=_parse_coord(line, _X, line_no, "x"),
                y=_parse_coord(line, _Y, line_no, "y"),
                z=_parse_coord(line, _Z, line_no, "z"),
                element=line[_ELEMENT].strip(),
            )
        )

    if not atoms:
        raise NoAtomsError(f"no atoms in PDB input {id!r}")
    return Structure(id=id, atoms=tuple(atoms), source_path=source_path)


def load_structure(path: str | Path) -> Structure:
    """Read a structure from a PDB file; the file stem becomes its id."""
    p = Path(path)
    # errors="replace" so arbitrary bytes degrade to a parse error, not a crash
    text = p.read_text(encoding="utf-8", errors="replace")
    return parse_pdb(text, id=p.stem, source_path=str(p))


def bounding_box(s: Structure) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise (min_corner, max_corner) over all atom coordinates."""
    if not s.atoms:
        raise NoAtomsError(f"structure {s.id!r} has no atoms")
    coords = s.coords()
    return coords.min(axis=0), coords.max(axis=0)


def _format_atom_name(name: str, element: str) -> str:
    # Standard alignment: names shorter than 4 chars start in column 14
    # unless the element symbol is two characters wide.
    if len(name) < 4 and len(element) != 2:
        name = " " + name
    return f"{name:<4.4s}"


def structure_to_pdb(s: Structure) -> str:
    """Serialize to standards-shaped ATOM lines (3-decimal coordinates)."""
    out = []
    for a in s.atoms:
        out.append(
            "ATOM  {serial:>5d} {name}{altloc}{res:>3.3s} {chain:1.1s}"
            "{resseq:>4d}{icode}   {x:8.3f}{y:8.3f}{z:8.3f}{occ:6.2f}"
            "{bfac:6.2f}          {element:>2.2s}".format(
                serial=a.serial,
                name=_format_atom_name(a.atom_name, a.element),
                altloc=" ",
                res=a.residue_name,
                chain=a.chain_id or " ",
                resseq=a.residue_seq,
                icode=" ",
                x=a.x,
                y=a.y,
                z=a.z,
                occ=1.0,
                bfac=0.0,
                element=a.element,
            )
        )
    out.append("END")
    return "\n".join(out) + "\n"


def write_structure(s: Structure, path: str | Path) -> None:
    Path(path).write_text(structure_to_pdb(s), encoding="utf-8")
