"""
Training and generation.

train() runs the flow-matching regression over coupled apo/holo pairs:
for every row and epoch a batch of (prior sample, t) draws is interpolated
toward the noised holo state, each prior sample first superposed onto its
target, and one gradient-descent step is taken.

generate() draws independent prior samples, integrates each with the
sampler, scores each with a self-consistency confidence and returns the
top-ranked results.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import DEFAULT_STEPS, TOP_K
from .errors import ConfigError, GeometryError, StructureError
from .fieldnet import FieldNetwork, FieldParams, LossTerms, TrainConfig, TrainingSample, gradients
from .flow import Field, FlowConfig, integrate, interpolate
from .geometry import kabsch, pocket_weighted_align
from .molgraph import MolGraph, parse_smiles
from .priors import PriorConfig, assemble_prior, ligand_order, noised_template
from .structures import ComplexState, Structure, Trajectory, concat_state, read_pdb, structure_from_state

logger = logging.getLogger(__name__)

TRAINING_COLUMNS = ("id", "apo_path", "holo_path", "smiles")


# ============================================================================
# Dataset
# ============================================================================

def ligand_elements(graph: MolGraph) -> List[str]:
    """Element of each ligand row, in prior row order."""
    return [graph.atoms[a] for a in ligand_order(graph)]


def target_state(holo: Structure, graph: MolGraph) -> ComplexState:
    """
    Holo coordinates as a t = 1 state whose ligand rows follow the prior's row order.

    Holo ligand fragments are matched to SMILES fragments by position; atoms
    within a fragment must appear in SMILES order.

    Raises:
        StructureError: If fragment sizes or elements disagree
    """
    ligand = holo.ligand_atoms
    blocks = []
    for f in range(graph.n_fragments):
        atoms = [atom for atom in ligand if atom.fragment == f]
        expected = [graph.atoms[a] for a in graph.fragment_atoms(f)]
        found = [atom.element for atom in atoms]
        if found != expected:
            raise StructureError(f"ligand fragment {f}: structure has {found}, SMILES has {expected}")
        blocks.append(np.array([atom.position for atom in atoms], dtype=float).reshape(-1, 3))
    if len(ligand) != graph.n_atoms:
        raise StructureError(f"structure has {len(ligand)} ligand atoms, SMILES has {graph.n_atoms}")
    return concat_state(holo.protein_coords(), blocks, t=1.0)


@dataclass(frozen=True)
class TrainingPair:
    """
    One coupled training row.

    Attributes:
        id: Row identifier
        template: Apo protein, pocket-aligned onto the holo frame
        target: Holo complex at t = 1, ligand rows in prior order
        graph: Ligand graph
        affinity: Measured affinity or None
    """
    id: str
    template: Structure
    target: ComplexState
    graph: MolGraph
    affinity: Optional[float] = None


def make_pair(pair_id: str, apo: Structure, holo: Structure, graph: MolGraph,
              affinity: Optional[float] = None) -> TrainingPair:
    target = target_state(holo, graph)
    template = pocket_weighted_align(apo, holo, target.ligand_coords()) if graph.n_atoms else apo
    if template.n_protein_atoms != holo.n_protein_atoms:
        raise StructureError(f"pair {pair_id}: apo and holo protein atom counts differ")
    return TrainingPair(id=pair_id, template=template, target=target, graph=graph, affinity=affinity)


def load_training_manifest(manifest: pd.DataFrame, base: Path = Path(".")) -> List[TrainingPair]:
    """
    Read every row of a training manifest (id, apo_path, holo_path, smiles[, affinity]).

    Relative paths resolve against `base`. Errors propagate: a training run
    never silently drops rows.
    """
    missing = [c for c in TRAINING_COLUMNS if c not in manifest.columns]
    if missing:
        raise ConfigError(f"training manifest lacks column(s): {', '.join(missing)}")
    pairs = []
    for row in manifest.to_dict("records"):
        apo = read_pdb((base / str(row["apo_path"])).read_text())
        holo = read_pdb((base / str(row["holo_path"])).read_text())
        graph = parse_smiles(str(row["smiles"]))
        affinity = row.get("affinity")
        affinity = None if affinity is None or pd.isna(affinity) else float(affinity)
        pairs.append(make_pair(str(row["id"]), apo, holo, graph, affinity))
    logger.info("loaded %d training pairs", len(pairs))
    return pairs


# ============================================================================
# Training
# ============================================================================

@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    structure: float
    affinity: float
    total: float


@dataclass(frozen=True)
class TrainingResult:
    params: FieldParams
    history: List[EpochLoss]

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame([vars(e) for e in self.history], columns=["epoch", "structure", "affinity", "total"])


def prior_config_for(config: TrainConfig) -> PriorConfig:
    return PriorConfig(sigma=config.sigma, center_mode=config.center_mode,
                       protein_prior=config.protein_prior, seed=config.seed)


def align_prior(x0: ComplexState, x1: ComplexState) -> ComplexState:
    """
    x0 rigidly superposed onto x1 over all rows.

    Every point of the path from the superposed x0 to x1 is then already
    superposed onto x1, which is where the sampler's per-step alignment
    puts its states.
    """
    try:
        transform = kabsch(x0.coords, x1.coords)
    except GeometryError as e:
        logger.debug("training prior left unaligned (%s)", e)
        return x0
    return x0.with_coords(transform.apply(x0.coords))


def draw_batch(pair: TrainingPair, config: TrainConfig, prior: PriorConfig,
               rng: np.random.Generator) -> List[TrainingSample]:
    """batch_size interpolated samples x_t between a superposed prior draw and the noised target."""
    batch = []
    for _ in range(config.batch_size):
        x1 = pair.target.with_coords(noised_template(pair.target.coords, config.sigma, rng))
        x0 = align_prior(assemble_prior(pair.template, pair.graph, prior, rng), x1)
        t = float(rng.uniform(0.0, 1.0))
        batch.append(TrainingSample(state=interpolate(x0, x1, t), target=x1.coords, affinity=pair.affinity))
    return batch


def train(params: FieldParams, pairs: Sequence[TrainingPair], config: TrainConfig,
          on_epoch: Optional[Callable[[EpochLoss], None]] = None) -> TrainingResult:
    """
    Fit the network by plain gradient descent.

    One update per row per epoch; the recorded epoch loss is the mean of the
    pre-update batch losses. The affinity term is off before
    config.affinity_start_epoch.

    Raises:
        ConfigError: If the dataset is empty
    """
    if not pairs:
        raise ConfigError("training dataset is empty")
    rng = np.random.default_rng(config.seed)
    prior = prior_config_for(config)
    history = []
    for epoch in range(config.epochs):
        weight = config.lambda_b if epoch >= config.affinity_start_epoch else 0.0
        terms: List[LossTerms] = []
        for pair in pairs:
            batch = draw_batch(pair, config, prior, rng)
            grads, loss = gradients(params, batch, config, affinity_weight=weight)
            params = params.updated(grads, config.learning_rate)
            terms.append(loss)
        record = EpochLoss(
            epoch=epoch,
            structure=float(np.mean([t.structure for t in terms])),
            affinity=float(np.mean([t.affinity for t in terms])),
            total=float(np.mean([t.total for t in terms])),
        )
        history.append(record)
        logger.debug("epoch %d: structure %.5f affinity %.5f total %.5f",
                     epoch, record.structure, record.affinity, record.total)
        if on_epoch is not None:
            on_epoch(record)
    if history:
        logger.info("trained %d epochs: total loss %.5f -> %.5f", len(history), history[0].total, history[-1].total)
    return TrainingResult(params=params, history=history)


# ============================================================================
# Generation
# ============================================================================

def confidence_score(field: Field, state: ComplexState, steps: int = DEFAULT_STEPS) -> float:
    """
    Self-consistency confidence: minus the mean per-atom displacement between
    `state` and the field's re-prediction of it at t = 1 - 1/steps.
    """
    t = 1.0 - 1.0 / steps
    repredicted = np.asarray(field(state.with_coords(state.coords, time=t), t), dtype=float)
    return -float(np.mean(np.linalg.norm(repredicted - state.coords, axis=1)))


@dataclass(frozen=True)
class GeneratedSample:
    """
    One integrated sample.

    Attributes:
        index: Sample number (its RNG stream)
        trajectory: All frames of the run
        structure: Final complex written onto the protein template
        confidence: Self-consistency score (higher is better)
        affinity: Predicted affinity, or None for fields without a head
    """
    index: int
    trajectory: Trajectory
    structure: Structure
    confidence: float
    affinity: Optional[float]


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream of sample `index` under root `seed`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate(field: Field, template: Structure, graph: MolGraph, flow_config: Optional[FlowConfig] = None,
             prior_config: Optional[PriorConfig] = None, samples: int = 1, jobs: int = 1,
             top_k: int = TOP_K) -> List[GeneratedSample]:
    """
    Draw, integrate, score and rank `samples` complexes.

    Samples run concurrently on `jobs` threads; each uses its own RNG stream,
    so results do not depend on scheduling. Ranking is by confidence,
    descending, ties broken by sample index.

    Returns:
        The first min(samples, top_k) ranked samples

    Raises:
        ConfigError: If samples or jobs < 1
    """
    if samples < 1 or jobs < 1:
        raise ConfigError(f"samples and jobs must be >= 1, got {samples} and {jobs}")
    flow_config = flow_config or FlowConfig()
    prior_config = prior_config or PriorConfig()
    if isinstance(field, FieldParams):
        field = FieldNetwork(field)
    elements = ligand_elements(graph)
    affinity = getattr(field, "affinity", None)

    def run(index: int) -> GeneratedSample:
        x0 = assemble_prior(template, graph, prior_config, sample_rng(prior_config.seed, index))
        trajectory = integrate(field, x0, flow_config, seed=prior_config.seed)
        final = trajectory.final
        logger.debug("sample %d integrated", index)
        return GeneratedSample(
            index=index,
            trajectory=trajectory,
            structure=structure_from_state(template, elements, final),
            confidence=confidence_score(field, final, flow_config.steps),
            affinity=affinity(final) if affinity is not None else None,
        )

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(run, range(samples)))
    ranked = sorted(results, key=lambda r: -r.confidence)[: min(samples, top_k)]
    logger.info("generated %d samples, kept %d; best confidence %.4f", samples, len(ranked), ranked[0].confidence)
    return ranked
