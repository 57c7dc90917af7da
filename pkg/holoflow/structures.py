"""
Coordinate data model and file I/O.

Defines the value types shared by every other module:

- Structure: protein chains plus ligand heavy atoms, read from / written to
  fixed-column PDB text
- ComplexState: the concatenated (N^P + N^L) x 3 coordinate block with its
  protein/ligand partition and flow time
- Trajectory: the frames of one sampling run, stored as JSON Lines with a
  metadata header line

Protein atoms keep file order (chains in file order, residues in file order);
ligand rows follow in fragment order.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    LIGAND_CHAIN_ID,
    LIGAND_RESIDUE_NAME,
    TRAJECTORY_FORMAT,
    TRAJECTORY_VERSION,
)
from .errors import PDBParseError, StructureError, TrajectoryFormatError

logger = logging.getLogger(__name__)

AMINO_ACIDS = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)
"""The 20 residue labels; index + 1 is the residue type s^P."""

WATER_NAMES = frozenset({"HOH", "WAT", "DOD"})
HYDROGEN_ELEMENTS = frozenset({"H", "D"})

Position = Tuple[float, float, float]


# ============================================================================
# Structure
# ============================================================================

@dataclass(frozen=True)
class Atom:
    """A protein heavy atom. Position in Å."""
    name: str
    element: str
    position: Position


@dataclass(frozen=True)
class Residue:
    """
    One amino-acid residue.

    Attributes:
        name: Three-letter residue label from AMINO_ACIDS
        index: Residue number as written in the file
        atoms: Heavy atoms in file order; exactly one is named CA
    """
    name: str
    index: int
    atoms: Tuple[Atom, ...]

    @property
    def ca_offset(self) -> int:
        """Position of the Cα atom within `atoms`."""
        return next(i for i, atom in enumerate(self.atoms) if atom.name == "CA")


@dataclass(frozen=True)
class Chain:
    chain_id: str
    residues: Tuple[Residue, ...]


@dataclass(frozen=True)
class LigandAtom:
    """A ligand heavy atom with its fragment label."""
    element: str
    position: Position
    fragment: int


@dataclass(frozen=True)
class Structure:
    """
    Protein chains and ligand heavy atoms with 3D coordinates.

    Attributes:
        chains: Protein chains in file order
        ligand_atoms: Ligand heavy atoms in fragment order
    """
    chains: Tuple[Chain, ...] = ()
    ligand_atoms: Tuple[LigandAtom, ...] = ()

    def __post_init__(self):
        for chain in self.chains:
            previous = None
            for residue in chain.residues:
                if previous is not None and residue.index <= previous:
                    raise StructureError(
                        f"chain {chain.chain_id!r}: residue indices must increase ({previous} then {residue.index})"
                    )
                previous = residue.index
                if sum(1 for atom in residue.atoms if atom.name == "CA") != 1:
                    raise StructureError(
                        f"chain {chain.chain_id!r} residue {residue.index} must have exactly one CA atom"
                    )
        if not np.all(np.isfinite(self.protein_coords())) or not np.all(np.isfinite(self.ligand_coords())):
            raise StructureError("structure coordinates must be finite")

    @property
    def residues(self) -> List[Residue]:
        return [residue for chain in self.chains for residue in chain.residues]

    @property
    def n_protein_atoms(self) -> int:
        return sum(len(residue.atoms) for residue in self.residues)

    @property
    def n_ligand_atoms(self) -> int:
        return len(self.ligand_atoms)

    def sequence(self) -> List[int]:
        """Residue types s^P as integers 1..20."""
        return [AMINO_ACIDS.index(residue.name) + 1 for residue in self.residues]

    def protein_coords(self) -> np.ndarray:
        positions = [atom.position for residue in self.residues for atom in residue.atoms]
        return np.array(positions, dtype=float).reshape(-1, 3)

    def ca_indices(self) -> List[int]:
        """Row of each residue's Cα within protein_coords()."""
        indices, offset = [], 0
        for residue in self.residues:
            indices.append(offset + residue.ca_offset)
            offset += len(residue.atoms)
        return indices

    def ca_coords(self) -> np.ndarray:
        return self.protein_coords()[self.ca_indices()].reshape(-1, 3)

    def ligand_coords(self) -> np.ndarray:
        return np.array([atom.position for atom in self.ligand_atoms], dtype=float).reshape(-1, 3)

    def ligand_fragment_ids(self) -> Tuple[int, ...]:
        return tuple(atom.fragment for atom in self.ligand_atoms)

    def with_protein_coords(self, coords: np.ndarray) -> "Structure":
        """Copy with protein positions replaced row by row."""
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.n_protein_atoms, 3):
            raise StructureError(f"expected {self.n_protein_atoms} protein rows, got {coords.shape}")
        rows = iter(coords)
        chains = tuple(
            replace(chain, residues=tuple(
                replace(residue, atoms=tuple(
                    replace(atom, position=_as_position(next(rows))) for atom in residue.atoms
                ))
                for residue in chain.residues
            ))
            for chain in self.chains
        )
        return replace(self, chains=chains)

    def with_ligand(self, elements: Sequence[str], coords: np.ndarray, fragments: Sequence[int]) -> "Structure":
        """Copy with the ligand replaced."""
        coords = np.asarray(coords, dtype=float).reshape(-1, 3)
        if not (len(elements) == len(fragments) == len(coords)):
            raise StructureError("ligand elements, fragments and coordinates must have equal length")
        ligand = tuple(
            LigandAtom(element=e, position=_as_position(x), fragment=int(f))
            for e, x, f in zip(elements, coords, fragments)
        )
        return replace(self, ligand_atoms=ligand)

    def with_ligand_coords(self, coords: np.ndarray) -> "Structure":
        return self.with_ligand(
            [atom.element for atom in self.ligand_atoms], coords, self.ligand_fragment_ids()
        )


def _as_position(row: Iterable[float]) -> Position:
    x, y, z = (float(v) for v in row)
    return (x, y, z)


# ============================================================================
# PDB reading
# ============================================================================

def _field(line: str, start: int, end: int) -> str:
    return line[start:end].strip()


def _coordinate(line: str, start: int, end: int, line_number: int) -> float:
    text = _field(line, start, end)
    try:
        value = float(text)
    except ValueError:
        raise PDBParseError(f"non-numeric coordinate {text!r}", line_number) from None
    if not np.isfinite(value):
        raise PDBParseError(f"non-finite coordinate {text!r}", line_number)
    return value


def _element(line: str, atom_name: str) -> str:
    element = _field(line, 76, 78)
    if not element:
        element = "".join(ch for ch in atom_name if ch.isalpha())[:1]
    return element.capitalize()


def read_pdb(text: str, reject_gaps: bool = True) -> Structure:
    """
    Parse fixed-column PDB text.

    ATOM records form protein chains; HETATM records are ligand atoms, one
    fragment per HETATM residue in file order. Waters and hydrogens are
    skipped. Only the first model is read.

    Args:
        text: PDB file contents
        reject_gaps: Reject chains whose residue numbers skip values
                     (unresolved residues)

    Returns:
        Structure with coordinates at 0.001 Å resolution

    Raises:
        PDBParseError: Malformed columns, non-numeric coordinates, unknown
            residue names, residues without Cα, or sequence gaps
    """
    chains: Dict[str, List[Tuple[str, int, List[Atom], int]]] = {}
    chain_order: List[str] = []
    ligand: List[LigandAtom] = []
    ligand_keys: Dict[Tuple[str, str, str], int] = {}
    current_key = None

    for line_number, line in enumerate(text.splitlines(), start=1):
        record = line[:6].strip()
        if record == "ENDMDL":
            break
        if record not in ("ATOM", "HETATM"):
            continue
        if len(line) < 54:
            raise PDBParseError(f"{record} record shorter than 54 columns", line_number)
        atom_name = _field(line, 12, 16)
        residue_name = _field(line, 17, 20)
        chain_id = line[21]
        residue_text = _field(line, 22, 26)
        position = (
            _coordinate(line, 30, 38, line_number),
            _coordinate(line, 38, 46, line_number),
            _coordinate(line, 46, 54, line_number),
        )
        if residue_name in WATER_NAMES:
            continue
        element = _element(line, atom_name)
        if element in HYDROGEN_ELEMENTS:
            continue

        if record == "HETATM":
            key = (chain_id, residue_text, residue_name)
            fragment = ligand_keys.setdefault(key, len(ligand_keys))
            ligand.append(LigandAtom(element=element, position=position, fragment=fragment))
            continue

        try:
            residue_index = int(residue_text)
        except ValueError:
            raise PDBParseError(f"non-numeric residue number {residue_text!r}", line_number) from None
        if residue_name not in AMINO_ACIDS:
            raise PDBParseError(f"unknown residue {residue_name!r}", line_number)
        if chain_id not in chains:
            chains[chain_id] = []
            chain_order.append(chain_id)
        residues = chains[chain_id]
        key = (chain_id, residue_index, residue_name)
        if current_key != key:
            residues.append((residue_name, residue_index, [], line_number))
            current_key = key
        residues[-1][2].append(Atom(name=atom_name, element=element, position=position))

    built = []
    for chain_id in chain_order:
        residues = []
        previous = None
        for name, index, atoms, line_number in chains[chain_id]:
            if sum(1 for atom in atoms if atom.name == "CA") != 1:
                raise PDBParseError(f"residue {name} {index} lacks a single CA atom", line_number)
            if previous is not None and index <= previous:
                raise PDBParseError(f"residue {index} out of order in chain {chain_id!r}", line_number)
            if reject_gaps and previous is not None and index != previous + 1:
                raise PDBParseError(
                    f"sequence gap between residues {previous} and {index} in chain {chain_id!r}", line_number
                )
            previous = index
            residues.append(Residue(name=name, index=index, atoms=tuple(atoms)))
        built.append(Chain(chain_id=chain_id, residues=tuple(residues)))
    return Structure(chains=tuple(built), ligand_atoms=tuple(ligand))


# ============================================================================
# PDB writing
# ============================================================================

def _format_coordinate(value: float) -> str:
    """Round half up to 3 decimals and right-justify in 8 columns."""
    if not np.isfinite(value) or abs(value) >= 10000.0:
        raise StructureError(f"coordinate {value} does not fit the PDB coordinate columns")
    text = str(Decimal(repr(float(value))).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))
    if text == "-0.000":
        text = "0.000"
    if len(text) > 8:
        raise StructureError(f"coordinate {value} does not fit the PDB coordinate columns")
    return text.rjust(8)


def _format_atom_name(name: str) -> str:
    return name.ljust(4) if len(name) >= 4 else f" {name}".ljust(4)


def _atom_record(record: str, serial: int, name: str, residue_name: str, chain_id: str,
                 residue_index: int, position: Position, element: str) -> str:
    if serial > 99999:
        raise StructureError("too many atoms for the PDB serial column")
    x, y, z = (_format_coordinate(v) for v in position)
    return (
        f"{record:<6}{serial:>5} {_format_atom_name(name)} {residue_name:>3} {chain_id:1}"
        f"{residue_index:>4}    {x}{y}{z}{1.0:>6.2f}{0.0:>6.2f}          {element.upper():>2}"
    )


def write_pdb(structure: Structure) -> str:
    """
    Render a structure as fixed-column PDB text.

    Output is byte-identical for identical input. Ligand fragments become
    HETATM residues numbered fragment + 1.

    Raises:
        StructureError: If a coordinate does not fit its 8-column field
    """
    lines = []
    serial = 1
    for chain in structure.chains:
        for residue in chain.residues:
            for atom in residue.atoms:
                lines.append(_atom_record("ATOM", serial, atom.name, residue.name, chain.chain_id,
                                          residue.index, atom.position, atom.element))
                serial += 1
        lines.append("TER")
    counters: Dict[int, int] = {}
    for atom in structure.ligand_atoms:
        counters[atom.fragment] = counters.get(atom.fragment, 0) + 1
        name = f"{atom.element.upper()}{counters[atom.fragment]}"[:4]
        lines.append(_atom_record("HETATM", serial, name, LIGAND_RESIDUE_NAME, LIGAND_CHAIN_ID,
                                  atom.fragment + 1, atom.position, atom.element))
        serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


# ============================================================================
# Complex states
# ============================================================================

@dataclass(frozen=True)
class ComplexState:
    """
    Concatenated protein + ligand coordinates at flow time t.

    Attributes:
        coords: (N^P + N^L) x 3 array in Å, protein rows first
        n_protein: Number of protein rows N^P
        fragment_ids: Fragment label of each ligand row
        time: Flow time t in [0, 1]
    """
    coords: np.ndarray
    n_protein: int
    fragment_ids: Tuple[int, ...]
    time: float = 0.0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "fragment_ids", tuple(int(f) for f in self.fragment_ids))
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise StructureError(f"coordinates must be N x 3, got {coords.shape}")
        if self.n_protein < 0 or self.n_protein + len(self.fragment_ids) != coords.shape[0]:
            raise StructureError(
                f"partition {self.n_protein} + {len(self.fragment_ids)} does not match {coords.shape[0]} rows"
            )
        if not 0.0 <= self.time <= 1.0:
            raise StructureError(f"time {self.time} outside [0, 1]")

    @property
    def n_ligand(self) -> int:
        return len(self.fragment_ids)

    @property
    def n_atoms(self) -> int:
        return self.coords.shape[0]

    def protein_coords(self) -> np.ndarray:
        return self.coords[: self.n_protein]

    def ligand_coords(self) -> np.ndarray:
        return self.coords[self.n_protein:]

    def group_ids(self) -> np.ndarray:
        """Per-row group: 0 for protein rows, fragment + 1 for ligand rows."""
        return np.concatenate([np.zeros(self.n_protein, dtype=int), np.array(self.fragment_ids, dtype=int) + 1])

    def same_partition(self, other: "ComplexState") -> bool:
        return self.n_protein == other.n_protein and self.fragment_ids == other.fragment_ids

    def with_coords(self, coords: np.ndarray, time: Optional[float] = None) -> "ComplexState":
        return ComplexState(
            coords=coords,
            n_protein=self.n_protein,
            fragment_ids=self.fragment_ids,
            time=self.time if time is None else time,
        )


def concat_state(protein: np.ndarray, fragments: Sequence[np.ndarray], t: float = 0.0) -> ComplexState:
    """
    Stack protein rows and ligand fragment blocks into one state.

    Raises:
        StructureError: If both the protein and the ligand are empty, or a
            block is not finite
    """
    protein = np.asarray(protein, dtype=float).reshape(-1, 3)
    blocks = [np.asarray(block, dtype=float).reshape(-1, 3) for block in fragments]
    if protein.shape[0] == 0 and sum(block.shape[0] for block in blocks) == 0:
        raise StructureError("cannot build a complex state from an empty protein and an empty ligand")
    coords = np.concatenate([protein] + blocks, axis=0)
    if not np.all(np.isfinite(coords)):
        raise StructureError("coordinate blocks must be finite")
    fragment_ids = tuple(index for index, block in enumerate(blocks) for _ in range(block.shape[0]))
    return ComplexState(coords=coords, n_protein=protein.shape[0], fragment_ids=fragment_ids, time=t)


def split_state(state: ComplexState) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Inverse of concat_state: protein rows and per-fragment blocks."""
    ligand = state.ligand_coords()
    ids = np.array(state.fragment_ids, dtype=int)
    count = int(ids.max()) + 1 if ids.size else 0
    return state.protein_coords().copy(), [ligand[ids == f].copy() for f in range(count)]


def state_from_structure(structure: Structure, time: float = 1.0) -> ComplexState:
    """Complex state holding a structure's protein then ligand rows."""
    coords = np.concatenate([structure.protein_coords(), structure.ligand_coords()], axis=0)
    return ComplexState(coords=coords, n_protein=structure.n_protein_atoms,
                        fragment_ids=structure.ligand_fragment_ids(), time=time)


def structure_from_state(template: Structure, elements: Sequence[str], state: ComplexState) -> Structure:
    """Write a state's coordinates back onto a protein template plus ligand elements."""
    if state.n_protein != template.n_protein_atoms:
        raise StructureError("state protein rows do not match the template")
    return template.with_protein_coords(state.protein_coords()).with_ligand(
        elements, state.ligand_coords(), state.fragment_ids
    )


# ============================================================================
# Trajectories
# ============================================================================

@dataclass(frozen=True)
class Frame:
    step: int
    time: float
    state: ComplexState


@dataclass(frozen=True)
class Trajectory:
    """
    Frames of one sampling run.

    Attributes:
        frames: Frames in step order; frame 0 is the prior sample at t = 0
        config: Snapshot of the sampler configuration
        seed: Seed of the run, if any
    """
    frames: Tuple[Frame, ...]
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.frames:
            raise TrajectoryFormatError("a trajectory needs at least one frame")
        if self.frames[0].time != 0.0:
            raise TrajectoryFormatError("frame 0 must be the prior sample at t = 0")
        for before, after in zip(self.frames, self.frames[1:]):
            if not after.time > before.time:
                raise TrajectoryFormatError(
                    f"frame times must increase strictly ({before.time} then {after.time})"
                )

    @property
    def final(self) -> ComplexState:
        return self.frames[-1].state


def _numbers(values: Iterable[float]) -> str:
    return "[" + ",".join(format(float(v), ".17g") for v in values) + "]"


def write_trajectory(trajectory: Trajectory) -> str:
    """
    Serialize a trajectory as JSON Lines: one header line, one line per frame.

    Numbers are written with 17 significant digits, so reading the text back
    reproduces coordinates bit for bit.
    """
    first = trajectory.frames[0].state
    header = {
        "format": TRAJECTORY_FORMAT,
        "version": TRAJECTORY_VERSION,
        "seed": trajectory.seed,
        "config": trajectory.config,
        "n_protein": first.n_protein,
        "fragment_ids": list(first.fragment_ids),
        "frames": len(trajectory.frames),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for frame in trajectory.frames:
        coords = ",".join(_numbers(row) for row in frame.state.coords)
        lines.append(f'{{"step":{frame.step},"time":{format(frame.time, ".17g")},"coords":[{coords}]}}')
    return "\n".join(lines) + "\n"


def read_trajectory(text: str) -> Trajectory:
    """
    Parse JSON Lines written by write_trajectory.

    Raises:
        TrajectoryFormatError: Missing header, truncated or malformed lines,
            frame count mismatch, or non-monotone frame times
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise TrajectoryFormatError("empty trajectory file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TrajectoryFormatError(f"unreadable header line: {e}") from None
    if not isinstance(header, dict) or header.get("format") != TRAJECTORY_FORMAT:
        raise TrajectoryFormatError("missing trajectory metadata header line")
    if header.get("version") != TRAJECTORY_VERSION:
        raise TrajectoryFormatError(f"unsupported trajectory version {header.get('version')!r}")
    n_protein = int(header["n_protein"])
    fragment_ids = tuple(header["fragment_ids"])
    frames = []
    for line_number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            coords = np.array(record["coords"], dtype=float).reshape(-1, 3)
            state = ComplexState(coords=coords, n_protein=n_protein, fragment_ids=fragment_ids,
                                 time=float(record["time"]))
            frames.append(Frame(step=int(record["step"]), time=float(record["time"]), state=state))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
            raise TrajectoryFormatError(f"line {line_number}: truncated or malformed frame ({e})") from None
    expected = header.get("frames")
    if expected is not None and expected != len(frames):
        raise TrajectoryFormatError(f"header announces {expected} frames, found {len(frames)}")
    return Trajectory(frames=tuple(frames), config=header.get("config") or {}, seed=header.get("seed"))


def trajectory_snapshots(trajectory: Trajectory, count: int) -> List[Frame]:
    """Evenly spaced frames, always including the first and the last."""
    if count < 1:
        raise TrajectoryFormatError("snapshot count must be positive")
    total = len(trajectory.frames)
    if count == 1:
        return [trajectory.frames[-1]]
    picks = sorted({int(round(i * (total - 1) / (count - 1))) for i in range(count)})
    return [trajectory.frames[i] for i in picks]
