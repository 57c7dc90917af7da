"""
Holoflow: conditional flow matching for apo-to-holo complex generation

Transports an apo protein template plus a ligand drawn from a bond-graph
harmonic prior to a holo complex by integrating a learned endpoint predictor.

Main Components:
- molgraph: SMILES subset parser, fragment Laplacians, automorphisms
- structures: PDB and trajectory I/O, complex states
- geometry: Kabsch, RMSD, TM-score, pocket-weighted alignment
- priors / flow: prior sampling, CondOT paths, the VD-ODE sampler
- coupling: apo/holo pair filtering
- fieldnet / pipeline: the trainable field, training and generation
- evaluation: symmetry-corrected RMSD, success rates, affinity metrics

Example:
    from holoflow import parse_smiles, read_pdb, init_field, generate

    graph = parse_smiles("CCO")
    template = read_pdb(open("apo.pdb").read())
    ranked = generate(init_field(seed=7), template, graph, samples=8)
"""

__version__ = "0.1.0"
__author__ = "Holoflow Contributors"

from .errors import HoloflowError
from .molgraph import MolGraph, automorphisms, laplacian, parse_smiles
from .structures import ComplexState, Structure, read_pdb, write_pdb
from .geometry import kabsch, rmsd, tm_score, pocket_weighted_align
from .priors import PriorConfig, assemble_prior, sample_harmonic
from .flow import FlowConfig, integrate, interpolate
from .coupling import CouplingCriteria, evaluate_pair
from .fieldnet import FieldNetwork, TrainConfig, init_field, load_params, save_params
from .pipeline import confidence_score, generate, train
from .evaluation import affinity_metrics, success_rate, symmetry_rmsd

__all__ = [
    "HoloflowError",
    "MolGraph", "automorphisms", "laplacian", "parse_smiles",
    "ComplexState", "Structure", "read_pdb", "write_pdb",
    "kabsch", "rmsd", "tm_score", "pocket_weighted_align",
    "PriorConfig", "assemble_prior", "sample_harmonic",
    "FlowConfig", "integrate", "interpolate",
    "CouplingCriteria", "evaluate_pair",
    "FieldNetwork", "TrainConfig", "init_field", "load_params", "save_params",
    "confidence_score", "generate", "train",
    "affinity_metrics", "success_rate", "symmetry_rmsd",
]
