"""
Docking and affinity metrics.

- symmetry_rmsd: ligand RMSD minimized over graph automorphisms, fragment
  by fragment, with no re-superposition
- success_rate: fraction of RMSDs at or below a threshold
- affinity_metrics: Pearson, Spearman, RMSE and MAE
- evaluate_manifest: per-complex report over a CSV of predictions
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .config import AUTOMORPHISM_CAP, POCKET_CUTOFF, SUCCESS_RMSD_THRESHOLD
from .errors import ConfigError, EvaluationError, GeometryError, HoloflowError
from .geometry import pocket_rmsd, pocket_weighted_align, rmsd
from .molgraph import MolGraph, automorphisms, parse_smiles
from .pipeline import target_state
from .priors import ligand_order
from .structures import Structure, read_pdb

logger = logging.getLogger(__name__)

EVALUATION_COLUMNS = ("id", "predicted_path", "reference_path", "smiles")
REPORT_COLUMNS = (
    "id", "ligand_rmsd", "symmetry_rmsd", "success", "pocket_rmsd",
    "predicted_affinity", "true_affinity", "pearson", "spearman", "rmse", "mae",
)
AGGREGATE_ID = "__aggregate__"


@dataclass(frozen=True)
class SymmetryRMSD:
    """Symmetry-corrected RMSD (Å); truncated is set when any fragment fell back to identity."""
    value: float
    truncated: bool


def symmetry_rmsd(graph: MolGraph, predicted: np.ndarray, reference: np.ndarray,
                  cap: int = AUTOMORPHISM_CAP) -> SymmetryRMSD:
    """
    Minimum plain RMSD over element- and bond-preserving relabellings.

    Rows of both point sets follow the graph's atom order. Fragments are
    relabelled independently. A fragment whose automorphism enumeration hits
    `cap` is scored with the identity labelling only.

    Raises:
        EvaluationError: If a point count differs from the graph's atom count
    """
    predicted = np.asarray(predicted, dtype=float).reshape(-1, 3)
    reference = np.asarray(reference, dtype=float).reshape(-1, 3)
    if predicted.shape[0] != graph.n_atoms or reference.shape[0] != graph.n_atoms:
        raise EvaluationError(
            f"point counts {predicted.shape[0]}/{reference.shape[0]} do not match {graph.n_atoms} graph atoms"
        )
    total = 0.0
    truncated = False
    for fragment in range(graph.n_fragments):
        group = automorphisms(graph, fragment, cap)
        atoms = np.array(group.atoms)
        mine = predicted[atoms]
        theirs = reference[atoms]
        if group.truncated:
            truncated = True
            candidates = [group.permutations[0]]
        else:
            candidates = group.permutations
        total += min(float(np.sum((mine - theirs[list(perm)]) ** 2)) for perm in candidates)
    return SymmetryRMSD(value=math.sqrt(total / graph.n_atoms), truncated=truncated)


def success_rate(rmsds: Sequence[float], threshold: float = SUCCESS_RMSD_THRESHOLD) -> float:
    """Fraction of RMSDs <= threshold."""
    values = np.asarray(list(rmsds), dtype=float)
    if values.size == 0:
        raise EvaluationError("success rate of an empty list is undefined")
    return float(np.mean(values <= threshold))


@dataclass(frozen=True)
class AffinityMetrics:
    """Correlations are None when either input is constant."""
    pearson: Optional[float]
    spearman: Optional[float]
    rmse: float
    mae: float


def affinity_metrics(predicted: Sequence[float], truth: Sequence[float]) -> AffinityMetrics:
    """
    Pearson on raw values, Spearman on average ranks, RMSE and MAE.

    Raises:
        EvaluationError: Unequal lengths or fewer than 2 values
    """
    predicted = np.asarray(list(predicted), dtype=float)
    truth = np.asarray(list(truth), dtype=float)
    if predicted.shape != truth.shape:
        raise EvaluationError(f"length mismatch: {predicted.size} predictions, {truth.size} values")
    if predicted.size < 2:
        raise EvaluationError("affinity metrics need at least 2 values")
    error = predicted - truth
    rmse = float(np.sqrt(np.mean(error ** 2)))
    mae = float(np.mean(np.abs(error)))
    if np.ptp(predicted) == 0 or np.ptp(truth) == 0:
        logger.warning("constant affinity input; correlations undefined")
        return AffinityMetrics(pearson=None, spearman=None, rmse=rmse, mae=mae)
    pearson = float(stats.pearsonr(predicted, truth)[0])
    spearman = float(stats.spearmanr(predicted, truth)[0])
    return AffinityMetrics(pearson=pearson, spearman=spearman, rmse=rmse, mae=mae)


# ============================================================================
# Reports
# ============================================================================

def ligand_points(structure: Structure, graph: MolGraph) -> np.ndarray:
    """Ligand coordinates of a structure reordered into the graph's atom order."""
    rows = target_state(structure, graph).ligand_coords()
    points = np.empty_like(rows)
    points[ligand_order(graph)] = rows
    return points


@dataclass(frozen=True)
class ComplexScore:
    id: str
    ligand_rmsd: float
    symmetry_rmsd: float
    success: bool
    pocket_rmsd: float
    truncated: bool


def score_complex(complex_id: str, predicted: Structure, reference: Structure, graph: MolGraph,
                  threshold: float = SUCCESS_RMSD_THRESHOLD, cutoff: float = POCKET_CUTOFF) -> ComplexScore:
    """
    Score one predicted complex against its reference.

    The prediction is first superposed onto the reference with pocket
    weights; ligand RMSDs are then measured in that frame. Success uses the
    symmetry-corrected value.
    """
    reference_ligand = ligand_points(reference, graph)
    aligned = pocket_weighted_align(predicted, reference, reference_ligand)
    mine = ligand_points(aligned, graph)
    plain = rmsd(mine, reference_ligand)
    corrected = symmetry_rmsd(graph, mine, reference_ligand)
    try:
        pocket = pocket_rmsd(predicted, reference, reference_ligand, cutoff)
    except GeometryError as e:
        logger.warning("%s: pocket RMSD undefined (%s)", complex_id, e)
        pocket = float("nan")
    return ComplexScore(
        id=complex_id,
        ligand_rmsd=plain,
        symmetry_rmsd=corrected.value,
        success=corrected.value <= threshold,
        pocket_rmsd=pocket,
        truncated=corrected.truncated,
    )


@dataclass(frozen=True)
class EvalReport:
    """
    Per-complex rows plus aggregates.

    Attributes:
        rows: One row per complex (REPORT_COLUMNS minus the aggregate-only ones)
        success_rate: Fraction of successful rows
        affinity: Affinity metrics, when at least two rows carry both values
    """
    rows: pd.DataFrame
    success_rate: float
    affinity: Optional[AffinityMetrics]

    def to_frame(self) -> pd.DataFrame:
        """Rows followed by the aggregate row."""
        aggregate = {
            "id": AGGREGATE_ID,
            "ligand_rmsd": self.rows["ligand_rmsd"].mean(),
            "symmetry_rmsd": self.rows["symmetry_rmsd"].mean(),
            "success": self.success_rate,
            "pocket_rmsd": self.rows["pocket_rmsd"].mean(),
        }
        if self.affinity is not None:
            aggregate.update(
                pearson=self.affinity.pearson, spearman=self.affinity.spearman,
                rmse=self.affinity.rmse, mae=self.affinity.mae,
            )
        frame = pd.concat([self.rows, pd.DataFrame([aggregate])], ignore_index=True)
        return frame.reindex(columns=list(REPORT_COLUMNS))


def _optional_float(value) -> float:
    return float("nan") if value is None or pd.isna(value) else float(value)


def evaluate_manifest(manifest: pd.DataFrame, base: Path = Path("."),
                      threshold: float = SUCCESS_RMSD_THRESHOLD) -> EvalReport:
    """
    Score every row of an evaluation manifest.

    Columns: id, predicted_path, reference_path, smiles and optionally
    predicted_affinity, true_affinity. Relative paths resolve against `base`.

    Raises:
        ConfigError: Missing columns
        EvaluationError: Empty manifest, or a row that cannot be scored
    """
    missing = [c for c in EVALUATION_COLUMNS if c not in manifest.columns]
    if missing:
        raise ConfigError(f"evaluation manifest lacks column(s): {', '.join(missing)}")
    if manifest.empty:
        raise EvaluationError("evaluation manifest has no rows")
    rows: List[dict] = []
    for row in manifest.to_dict("records"):
        complex_id = str(row["id"])
        try:
            predicted = read_pdb((base / str(row["predicted_path"])).read_text())
            reference = read_pdb((base / str(row["reference_path"])).read_text())
            score = score_complex(complex_id, predicted, reference, parse_smiles(str(row["smiles"])), threshold)
        except (OSError, HoloflowError) as e:
            raise EvaluationError(f"row {complex_id}: {e}") from None
        rows.append({
            "id": score.id,
            "ligand_rmsd": score.ligand_rmsd,
            "symmetry_rmsd": score.symmetry_rmsd,
            "success": score.success,
            "pocket_rmsd": score.pocket_rmsd,
            "predicted_affinity": _optional_float(row.get("predicted_affinity")),
            "true_affinity": _optional_float(row.get("true_affinity")),
        })
    frame = pd.DataFrame(rows)
    rate = success_rate(frame["symmetry_rmsd"], threshold)
    labelled = frame.dropna(subset=["predicted_affinity", "true_affinity"])
    affinity = None
    if len(labelled) >= 2:
        affinity = affinity_metrics(labelled["predicted_affinity"], labelled["true_affinity"])
    logger.info("evaluated %d complexes: success rate %.3f", len(frame), rate)
    return EvalReport(rows=frame, success_rate=rate, affinity=affinity)
