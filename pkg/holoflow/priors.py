"""
Prior samples at t = 0.

Ligand fragments are drawn from a harmonic prior whose precision matrix is
the fragment's bond-graph Laplacian; the protein is an externally supplied
template plus small Gaussian noise (or, optionally, a harmonic sample over a
residue chain graph). assemble_prior concatenates the two into a
ComplexState.

All samplers take an explicit numpy Generator; callers running samples in
parallel derive one stream per sample from the root seed.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from .config import DEFAULT_SIGMA, EIGENVALUE_TOLERANCE, NEGATIVE_EIGENVALUE_LIMIT
from .errors import ConfigError, PriorError
from .molgraph import FragmentLaplacian, MolGraph, laplacian
from .structures import ComplexState, Structure, concat_state

logger = logging.getLogger(__name__)

CenterMode = Literal["ca_centroid", "origin", "point"]
ProteinPrior = Literal["template", "harmonic"]


@dataclass(frozen=True)
class PriorConfig:
    """
    Prior sampling options.

    Attributes:
        sigma: Standard deviation (Å) of the template noise
        center_mode: Where ligand fragments are centred: the protein Cα
                     centroid, the origin, or `center_point`
        center_point: Explicit centre used with center_mode = 'point'
        protein_prior: 'template' (noised template) or 'harmonic'
        seed: Root seed of the sampler
    """
    sigma: float = DEFAULT_SIGMA
    center_mode: CenterMode = "ca_centroid"
    center_point: Optional[Tuple[float, float, float]] = None
    protein_prior: ProteinPrior = "template"
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.center_mode not in ("ca_centroid", "origin", "point"):
            raise ConfigError(f"unknown center mode {self.center_mode!r}")
        if self.center_mode == "point" and self.center_point is None:
            raise ConfigError("center_mode 'point' needs center_point")
        if self.protein_prior not in ("template", "harmonic"):
            raise ConfigError(f"unknown protein prior {self.protein_prior!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_harmonic(lap: FragmentLaplacian, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw fragment coordinates from rho(x) ∝ exp(-1/2 x^T L x).

    Each spatial dimension gets independent coefficients c_k ~ N(0, 1/lambda_k)
    along every eigenvector with lambda_k > 0; the null mode is fixed so the
    fragment centroid equals `center`.

    Args:
        lap: Fragment Laplacian
        center: Requested centroid (3,)
        rng: Random generator

    Returns:
        size x 3 coordinates in Å

    Raises:
        PriorError: If an eigenvalue is below -1e-10
    """
    values, vectors = eigh(lap.entries)
    if values.size and values.min() < NEGATIVE_EIGENVALUE_LIMIT:
        raise PriorError(f"Laplacian has negative eigenvalue {values.min():.3e}")
    positive = values > EIGENVALUE_TOLERANCE
    scales = 1.0 / np.sqrt(values[positive])
    coefficients = rng.standard_normal((int(positive.sum()), 3)) * scales[:, None]
    points = vectors[:, positive] @ coefficients
    points = points - points.mean(axis=0)
    return points + np.asarray(center, dtype=float).reshape(3)


def noised_template(template: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Template plus i.i.d. N(0, sigma^2) per coordinate; sigma = 0 returns an exact copy."""
    template = np.asarray(template, dtype=float)
    if sigma == 0:
        return template.copy()
    return template + sigma * rng.standard_normal(template.shape)


def protein_laplacian(structure: Structure, chain_index: int) -> FragmentLaplacian:
    """
    Laplacian of one chain's bond graph for the fully harmonic protein prior.

    Consecutive Cα atoms are linked, and every other atom of a residue is
    linked to that residue's Cα. Row order follows protein_coords().
    """
    offset = sum(len(r.atoms) for chain in structure.chains[:chain_index] for r in chain.residues)
    chain = structure.chains[chain_index]
    size = sum(len(r.atoms) for r in chain.residues)
    adjacency = np.zeros((size, size))
    previous_ca = None
    row = 0
    for residue in chain.residues:
        ca = row + residue.ca_offset
        for k in range(len(residue.atoms)):
            if row + k != ca:
                adjacency[ca, row + k] = adjacency[row + k, ca] = 1.0
        if previous_ca is not None:
            adjacency[ca, previous_ca] = adjacency[previous_ca, ca] = 1.0
        previous_ca = ca
        row += len(residue.atoms)
    entries = np.diag(adjacency.sum(axis=1)) - adjacency
    return FragmentLaplacian(atoms=tuple(range(offset, offset + size)), entries=entries)


def _protein_prior(template: Structure, config: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    coords = template.protein_coords()
    if config.protein_prior == "template":
        return noised_template(coords, config.sigma, rng)
    sampled = np.empty_like(coords)
    for index in range(len(template.chains)):
        lap = protein_laplacian(template, index)
        rows = list(lap.atoms)
        sampled[rows] = sample_harmonic(lap, coords[rows].mean(axis=0), rng)
    return sampled


def ligand_center(template: Structure, config: PriorConfig) -> np.ndarray:
    if config.center_mode == "origin":
        return np.zeros(3)
    if config.center_mode == "point":
        return np.asarray(config.center_point, dtype=float)
    ca = template.ca_coords()
    if ca.shape[0] == 0:
        raise PriorError("cannot centre ligand on the Cα centroid of an empty protein")
    return ca.mean(axis=0)


def assemble_prior(template: Structure, graph: MolGraph, config: PriorConfig,
                   rng: np.random.Generator) -> ComplexState:
    """
    Sample a complete t = 0 state.

    The protein block is the noised template; each ligand fragment is drawn
    independently from its harmonic prior, centred per `config`, and the
    blocks are concatenated in fragment order. Ligand rows follow the
    graph's atom order within each fragment.
    """
    protein = _protein_prior(template, config, rng)
    center = ligand_center(template, config)
    fragments = [sample_harmonic(laplacian(graph, f), center, rng) for f in range(graph.n_fragments)]
    state = concat_state(protein, fragments, t=0.0)
    logger.debug("prior sample: %d protein rows, %d ligand rows", state.n_protein, state.n_ligand)
    return state


def ligand_order(graph: MolGraph) -> np.ndarray:
    """Graph atom index of each ligand row produced by assemble_prior."""
    return np.array([a for f in range(graph.n_fragments) for a in graph.fragment_atoms(f)], dtype=int)
