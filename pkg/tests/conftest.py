"""
Shared fixtures: small synthetic proteins, ligands and the toy transport task.
"""

import numpy as np
import pytest

from holoflow.structures import Atom, Chain, Residue, Structure


def ca_structure(ca, ligand=None, elements=None, fragments=None, chain_id="A"):
    """Cα-only ALA chain with an optional ligand."""
    residues = tuple(
        Residue(name="ALA", index=i + 1,
                atoms=(Atom(name="CA", element="C", position=tuple(float(v) for v in row)),))
        for i, row in enumerate(np.asarray(ca, dtype=float))
    )
    structure = Structure(chains=(Chain(chain_id=chain_id, residues=residues),))
    if ligand is not None:
        ligand = np.asarray(ligand, dtype=float).reshape(-1, 3)
        elements = elements or ["C"] * len(ligand)
        fragments = fragments or [0] * len(ligand)
        structure = structure.with_ligand(elements, ligand, fragments)
    return structure


TOY_APO_CA = np.array([
    [0.0, 0.0, 0.0],
    [3.8, 0.6, 0.0],
    [7.6, 0.0, 0.0],
    [11.4, 0.6, 0.0],
    [15.2, 0.0, 0.0],
])

TOY_HOLO_CA = np.array([
    [0.0, 0.0, 0.0],
    [3.8, 0.6, 0.0],
    [7.6, 0.0, 0.0],
    [10.9, 1.6, 1.2],
    [13.8, 3.0, 2.8],
])

TOY_LIGAND = np.array([[8.0, 3.2, 1.6]])


@pytest.fixture
def make_structure():
    return ca_structure


@pytest.fixture
def toy_apo():
    return ca_structure(TOY_APO_CA)


@pytest.fixture
def toy_holo():
    return ca_structure(TOY_HOLO_CA, ligand=TOY_LIGAND)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def helix_ca():
    """20-residue ideal α-helix Cα trace (1.5 Å rise, 100° per residue, 2.3 Å radius)."""
    k = np.arange(20)
    angle = np.deg2rad(100.0) * k
    return np.column_stack([2.3 * np.cos(angle), 2.3 * np.sin(angle), 1.5 * k])
