"""
Ligand bond graphs parsed from SMILES.

This module turns a SMILES string into a heavy-atom bond graph and derives
the objects the harmonic prior and symmetry-corrected RMSD need:

- parse_smiles: lark grammar + tree interpreter building a MolGraph
- laplacian: dense L = D - A of one connected fragment
- automorphisms: element- and bond-preserving relabellings of a fragment

Aromaticity is purely syntactic (lowercase atoms and ':' bonds); there is no
valence model. Charges, isotopes, atom classes and stereo marks are accepted,
ignored, and reported through MolGraph.warnings.
"""

import enum
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken
from lark.visitors import Interpreter
from networkx.algorithms.isomorphism import (
    GraphMatcher,
    categorical_edge_match,
    categorical_node_match,
)

from .config import AUTOMORPHISM_CAP, MAX_FRAGMENT_ATOMS
from .errors import GraphError, SmilesParseError

logger = logging.getLogger(__name__)


# ============================================================================
# Element tables
# ============================================================================

ELEMENTS = frozenset("""
    H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni
    Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I
    Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt
    Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu
""".split())

AROMATIC_SYMBOLS = frozenset({"b", "c", "n", "o", "p", "s", "se", "as", "te"})

_BRACKET_PATTERN = re.compile(
    r"^\[(?P<isotope>\d+)?"
    r"(?P<symbol>se|as|te|[A-Z][a-z]?|[bcnops])"
    r"(?P<chiral>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-]{1,2}\d*)?"
    r"(?P<atom_class>:\d+)?\]$"
)


class BondOrder(enum.IntEnum):
    """Bond multiplicity. AROMATIC marks lowercase-ring or ':' bonds."""
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    def __str__(self) -> str:
        return "aromatic" if self is BondOrder.AROMATIC else str(int(self))


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}


# ============================================================================
# Graph types
# ============================================================================

@dataclass(frozen=True)
class Bond:
    """
    An undirected bond between two heavy atoms.

    Attributes:
        begin: Index of the first atom (begin < end)
        end: Index of the second atom
        order: Bond multiplicity
    """
    begin: int
    end: int
    order: BondOrder


@dataclass(frozen=True)
class MolGraph:
    """
    Heavy-atom bond graph of a (multi-fragment) ligand.

    Attributes:
        atoms: Element symbol per heavy atom, capitalized
        bonds: Undirected bonds, no self-loops, no duplicates
        fragment_ids: Connected-component label per atom, contiguous from 0
        aromatic: Whether each atom was written as an aromatic atom
        warnings: Tokens that were accepted but ignored during parsing
    """
    atoms: Tuple[str, ...]
    bonds: Tuple[Bond, ...]
    fragment_ids: Tuple[int, ...]
    aromatic: Tuple[bool, ...] = ()
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        n = len(self.atoms)
        if "H" in self.atoms:
            raise GraphError("hydrogen atoms are not part of the heavy-atom graph")
        if len(self.fragment_ids) != n:
            raise GraphError("fragment_ids must have one entry per atom")
        if not self.aromatic:
            object.__setattr__(self, "aromatic", (False,) * n)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.begin < n and 0 <= bond.end < n):
                raise GraphError(f"bond ({bond.begin}, {bond.end}) out of range")
            if bond.begin == bond.end:
                raise GraphError(f"self-loop on atom {bond.begin}")
            key = (min(bond.begin, bond.end), max(bond.begin, bond.end))
            if key in seen:
                raise GraphError(f"duplicate bond {key}")
            seen.add(key)
        labels = sorted(set(self.fragment_ids))
        if labels != list(range(len(labels))):
            raise GraphError("fragment labels must be contiguous from 0")

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_fragments(self) -> int:
        return len(set(self.fragment_ids))

    def fragment_atoms(self, fragment: int) -> Tuple[int, ...]:
        """Global atom indices of one fragment, ascending."""
        if fragment not in set(self.fragment_ids):
            raise GraphError(f"unknown fragment id {fragment!r}")
        return tuple(i for i, f in enumerate(self.fragment_ids) if f == fragment)

    def fragment_sizes(self) -> List[int]:
        return [len(self.fragment_atoms(f)) for f in range(self.n_fragments)]

    def adjacency(self) -> np.ndarray:
        """Unweighted 0/1 adjacency matrix; bond order is not used."""
        matrix = np.zeros((self.n_atoms, self.n_atoms))
        for bond in self.bonds:
            matrix[bond.begin, bond.end] = 1.0
            matrix[bond.end, bond.begin] = 1.0
        return matrix

    def degrees(self) -> List[int]:
        return [int(d) for d in self.adjacency().sum(axis=1)]

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        for index, element in enumerate(self.atoms):
            graph.add_node(index, element=element, aromatic=self.aromatic[index])
        for bond in self.bonds:
            graph.add_edge(bond.begin, bond.end, order=int(bond.order))
        return graph

    def describe(self) -> Dict[str, object]:
        """Summary used by the `parse` subcommand."""
        return {
            "atoms": self.n_atoms,
            "bonds": len(self.bonds),
            "fragments": self.fragment_sizes(),
            "elements": list(self.atoms),
            "degrees": self.degrees(),
            "aromatic_bonds": sum(1 for b in self.bonds if b.order is BondOrder.AROMATIC),
        }


@dataclass(frozen=True)
class FragmentLaplacian:
    """
    Graph Laplacian L = D - A of one connected fragment.

    Attributes:
        atoms: Global atom indices of the fragment (row order)
        entries: Dense symmetric matrix, rows summing to zero
    """
    atoms: Tuple[int, ...]
    entries: np.ndarray

    @property
    def size(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class AutomorphismSet:
    """
    Relabellings of one fragment that preserve elements and bonds.

    Attributes:
        atoms: Global atom indices of the fragment; permutations act on
               positions in this tuple
        permutations: perm[i] = j maps local atom i onto local atom j;
                      the identity is always first
        truncated: True when enumeration stopped at the cap
    """
    atoms: Tuple[int, ...]
    permutations: Tuple[Tuple[int, ...], ...]
    truncated: bool

    def __len__(self) -> int:
        return len(self.permutations)


# ============================================================================
# Parser
# ============================================================================

class SmilesGraphBuilder(Interpreter):
    """
    Lark interpreter that walks a SMILES parse tree top-down and builds
    the heavy-atom graph.

    State variables:
        previous: Index of the atom the next chained atom bonds to
        pending_bond: Explicit bond token waiting for its second atom
        open_rings: Ring label -> (atom index, bond token, byte offset)
    """

    def __init__(self, text: str):
        super().__init__()
        self.text = text
        self.elements: List[str] = []
        self.aromatic: List[bool] = []
        self.bonds: Dict[Tuple[int, int], BondOrder] = {}
        self.warnings: List[str] = []
        self.previous: Optional[int] = None
        self.pending_bond: Optional[Token] = None
        self.open_rings: Dict[str, Tuple[Optional[int], Optional[str], int]] = {}
        self._section_start = 0
        self._section_atoms = 0

    def _offset(self, token: Token) -> int:
        return len(self.text[: token.start_pos].encode("utf-8"))

    def _warn(self, message: str):
        self.warnings.append(message)
        logger.warning("SMILES %r: %s", self.text, message)

    # ------------------------------------------------------------------------
    # Tree rules
    # ------------------------------------------------------------------------

    def start(self, tree: Tree):
        for child in tree.children:
            if isinstance(child, Token):
                self._close_section(self._offset(child))
                self._section_start = self._offset(child) + 1
                self.previous = None
                self.pending_bond = None
            else:
                self.visit(child)
        self._close_section(len(self.text.encode("utf-8")))

    def chain(self, tree: Tree):
        for child in tree.children:
            if isinstance(child, Token):
                self.pending_bond = child
            else:
                self.visit(child)

    def atom_group(self, tree: Tree):
        atom_tree, *rest = tree.children
        index = self._add_atom(atom_tree.children[0])
        if self.previous is not None and index is not None:
            self._add_bond(self.previous, index, self.pending_bond, self.pending_bond or atom_tree.children[0])
        self.pending_bond = None
        self.previous = index
        for child in rest:
            if isinstance(child, Token):
                self._ring_bond(index, child)
            else:
                self.visit(child)
                self.previous = index

    def branch(self, tree: Tree):
        anchor = self.previous
        for child in tree.children:
            if isinstance(child, Token):
                self.pending_bond = child
            else:
                self.visit(child)
        self.previous = anchor
        self.pending_bond = None

    # ------------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------------

    def _close_section(self, offset: int):
        if self._section_atoms == 0:
            raise SmilesParseError("empty fragment", self._section_start, self.text[self._section_start:offset])
        self._section_atoms = 0

    def _add_atom(self, token: Token) -> Optional[int]:
        if token.type == "ORGANIC":
            element, aromatic = str(token), False
        elif token.type == "AROMATIC":
            element, aromatic = str(token).upper(), True
        else:
            element, aromatic = self._bracket_atom(token)
            if element == "H":
                return None
        self.elements.append(element)
        self.aromatic.append(aromatic)
        self._section_atoms += 1
        return len(self.elements) - 1

    def _bracket_atom(self, token: Token) -> Tuple[str, bool]:
        match = _BRACKET_PATTERN.match(str(token))
        if match is None:
            raise SmilesParseError("unknown element", self._offset(token), str(token))
        symbol = match.group("symbol")
        aromatic = symbol in AROMATIC_SYMBOLS
        element = symbol.capitalize() if aromatic else symbol
        if element not in ELEMENTS:
            raise SmilesParseError("unknown element", self._offset(token), str(token))
        for part, label in (("isotope", "isotope"), ("chiral", "chirality"),
                            ("charge", "charge"), ("atom_class", "atom class")):
            if match.group(part):
                self._warn(f"{label} {match.group(part)!r} in {token} ignored")
        return element, aromatic

    def _bond_order(self, symbol: Optional[str], a: int, b: int) -> BondOrder:
        if symbol is None:
            if self.aromatic[a] and self.aromatic[b]:
                return BondOrder.AROMATIC
            return BondOrder.SINGLE
        if symbol in "/\\":
            self._warn(f"stereo bond {symbol!r} ignored")
        return _BOND_SYMBOLS[symbol]

    def _add_bond(self, a: int, b: int, bond: Optional[Token], where: Token):
        symbol = str(bond) if bond is not None else None
        self._insert_bond(a, b, self._bond_order(symbol, a, b), where)

    def _insert_bond(self, a: int, b: int, order: BondOrder, where: Token):
        if a == b:
            raise SmilesParseError("ring closure onto the same atom", self._offset(where), str(where))
        key = (min(a, b), max(a, b))
        if key in self.bonds:
            raise SmilesParseError("duplicate bond", self._offset(where), str(where))
        self.bonds[key] = order

    def _ring_bond(self, index: Optional[int], token: Token):
        text = str(token)
        symbol = text[0] if text[0] in _BOND_SYMBOLS else None
        label = text[1:] if symbol else text
        if label not in self.open_rings:
            self.open_rings[label] = (index, symbol, self._offset(token))
            return
        other, other_symbol, _ = self.open_rings.pop(label)
        if other is None or index is None:
            return
        if symbol and other_symbol and symbol != other_symbol:
            raise SmilesParseError("conflicting ring-closure bonds", self._offset(token), text)
        order = self._bond_order(symbol or other_symbol, other, index)
        self._insert_bond(other, index, order, token)

    def finish(self) -> MolGraph:
        if self.open_rings:
            label, (_, _, offset) = min(self.open_rings.items(), key=lambda item: item[1][2])
            raise SmilesParseError(f"unpaired ring-closure digit {label!r}", offset, label)
        n = len(self.elements)
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from(self.bonds)
        components = sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0])
        fragment_ids = [0] * n
        for label, component in enumerate(components):
            for atom in component:
                fragment_ids[atom] = label
        bonds = tuple(Bond(a, b, order) for (a, b), order in sorted(self.bonds.items()))
        return MolGraph(
            atoms=tuple(self.elements),
            bonds=bonds,
            fragment_ids=tuple(fragment_ids),
            aromatic=tuple(self.aromatic),
            warnings=tuple(self.warnings),
        )


@lru_cache(maxsize=1)
def _smiles_parser() -> Lark:
    grammar_path = Path(__file__).parent / "smiles.lark"
    return Lark(
        grammar_path.read_text(),
        start="start",
        parser="lalr",
        propagate_positions=True,
        maybe_placeholders=False,
    )


def _syntax_error(text: str, error: UnexpectedInput) -> SmilesParseError:
    """Translate a lark error into a positioned SmilesParseError."""
    end = len(text.encode("utf-8"))
    if isinstance(error, UnexpectedCharacters):
        position = error.pos_in_stream
        char = text[position]
        offset = len(text[:position].encode("utf-8"))
        if char in "()":
            return SmilesParseError("unbalanced parentheses", offset, char)
        if char == ".":
            return SmilesParseError("empty fragment", offset, char)
        if char.isdigit() or char == "%":
            return SmilesParseError("misplaced ring-closure digit", offset, char)
        if char.isalpha() or char == "*":
            return SmilesParseError("unknown element", offset, char)
        return SmilesParseError("unexpected character", offset, char)
    if isinstance(error, UnexpectedToken) and error.token.type != "$END":
        token = error.token
        offset = len(text[: token.start_pos].encode("utf-8"))
        if token.type == "DOT":
            return SmilesParseError("empty fragment", offset, str(token))
        if str(token) in "()":
            return SmilesParseError("unbalanced parentheses", offset, str(token))
        return SmilesParseError("unexpected token", offset, str(token))
    if text.count("(") > text.count(")"):
        return SmilesParseError("unbalanced parentheses", end, "")
    if text.rstrip().endswith("."):
        return SmilesParseError("empty fragment", end, "")
    return SmilesParseError("unexpected end of input", end, "")


def parse_smiles(text: str) -> MolGraph:
    """
    Parse a SMILES string into a heavy-atom bond graph.

    Args:
        text: SMILES string in the supported subset

    Returns:
        MolGraph with fragments labelled by connected component

    Raises:
        SmilesParseError: On syntax errors, unpaired ring closures, unknown
            elements or empty fragments, naming the byte offset

    Example:
        >>> graph = parse_smiles("CCO")
        >>> graph.atoms, graph.degrees()
        (('C', 'C', 'O'), [1, 2, 1])
    """
    if not text or not text.strip():
        raise SmilesParseError("empty SMILES", 0, "")
    text = text.strip()
    try:
        tree = _smiles_parser().parse(text)
    except UnexpectedEOF as e:
        raise _syntax_error(text, e) from e
    except UnexpectedInput as e:
        raise _syntax_error(text, e) from e
    builder = SmilesGraphBuilder(text)
    builder.visit(tree)
    return builder.finish()


# ============================================================================
# Derived algebra
# ============================================================================

def laplacian(graph: MolGraph, fragment: int) -> FragmentLaplacian:
    """
    Dense Laplacian L = D - A of one fragment.

    Bond order does not scale entries.

    Raises:
        GraphError: If the fragment id does not exist
    """
    atoms = graph.fragment_atoms(fragment)
    adjacency = graph.adjacency()[np.ix_(atoms, atoms)]
    entries = np.diag(adjacency.sum(axis=1)) - adjacency
    return FragmentLaplacian(atoms=atoms, entries=entries)


def automorphisms(graph: MolGraph, fragment: int, cap: int = AUTOMORPHISM_CAP) -> AutomorphismSet:
    """
    Enumerate element- and bond-preserving relabellings of a fragment.

    VF2 backtracking with element node matching and bond-order edge
    matching; degree refinement is part of its feasibility checks.
    Enumeration stops once `cap` permutations (identity included) are held.

    Raises:
        GraphError: Unknown fragment, fragment above MAX_FRAGMENT_ATOMS, or cap < 1
    """
    if cap < 1:
        raise GraphError("automorphism cap must be a positive integer")
    atoms = graph.fragment_atoms(fragment)
    if len(atoms) > MAX_FRAGMENT_ATOMS:
        raise GraphError(
            f"fragment {fragment} has {len(atoms)} atoms; automorphisms are limited to {MAX_FRAGMENT_ATOMS}"
        )
    local = nx.convert_node_labels_to_integers(graph.to_networkx().subgraph(atoms), ordering="sorted")
    matcher = GraphMatcher(
        local,
        local,
        node_match=categorical_node_match("element", None),
        edge_match=categorical_edge_match("order", None),
    )
    identity = tuple(range(len(atoms)))
    permutations = [identity]
    truncated = False
    for mapping in matcher.isomorphisms_iter():
        perm = tuple(mapping[i] for i in range(len(atoms)))
        if perm == identity:
            continue
        if len(permutations) >= cap:
            truncated = True
            break
        permutations.append(perm)
    if truncated:
        logger.warning("automorphism enumeration for fragment %d truncated at %d", fragment, cap)
    return AutomorphismSet(atoms=atoms, permutations=tuple(permutations), truncated=truncated)
