"""crossdock: FFT grid docking, master-worker batch dispatch, cost analysis."""

from .docking import (
    DockConfig,
    DockingResult,
    Pose,
    Rotation,
    TimeBreakdown,
    direct_correlate,
    dock_pair,
    fft_correlate,
    generate_rotations,
    profile_dock,
    rotate_structure,
)
from .errors import (
    ComparisonError,
    CrossdockError,
    DispatchError,
    GridMismatchError,
    GridOverflowError,
    NoAtomsError,
    ParameterError,
    PdbParseError,
    WireError,
)
from .grid import (
    LIGAND,
    RECEPTOR,
    DockGrid,
    GridSpec,
    ScoringParams,
    assign_grid,
    choose_grid_size,
)
from .pdb_io import AtomRecord, Structure, bounding_box, load_structure, parse_pdb

__version__ = "0.1.0"
