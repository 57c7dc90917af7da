"""
Superposition and similarity kernels.

- kabsch: optionally weighted least-squares rigid superposition
- rmsd: plain root mean square deviation (no fitting)
- tm_score: Cα TM-score with iterative superposition
- pocket_weighted_align: apo-onto-holo superposition weighted toward the
  binding pocket
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .config import (
    COLLINEAR_TOLERANCE,
    ORTHONORMAL_TOLERANCE,
    POCKET_CUTOFF,
    POCKET_WEIGHT_SCALE,
    TM_MAX_ITERATIONS,
    TM_MIN_D0,
)
from .errors import DegenerateAlignmentError, GeometryError
from .structures import Structure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RigidTransform:
    """
    Proper rigid motion x -> R x + t.

    Attributes:
        rotation: 3 x 3 orthogonal matrix with det = +1
        translation: Translation vector in Å
    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if rotation.shape != (3, 3):
            raise GeometryError(f"rotation must be 3 x 3, got {rotation.shape}")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ORTHONORMAL_TOLERANCE, rtol=0.0):
            raise GeometryError("rotation is not orthogonal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise GeometryError("rotation has det != +1 (reflection)")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return points @ self.rotation.T + self.translation


def _check_pair(a: np.ndarray, b: np.ndarray, minimum: int) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if a.shape != b.shape:
        raise GeometryError(f"point count mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < minimum:
        raise GeometryError(f"need at least {minimum} points, got {a.shape[0]}")
    return a, b


def _rank_below_two(centered: np.ndarray) -> bool:
    singular = np.linalg.svd(centered, compute_uv=False)
    return singular[0] == 0.0 or singular[1] <= COLLINEAR_TOLERANCE * singular[0]


def kabsch(mobile: np.ndarray, target: np.ndarray, weights: Optional[np.ndarray] = None) -> RigidTransform:
    """
    Weighted least-squares superposition of `mobile` onto `target`.

    Minimizes sum_i w_i |R m_i + t - t_i|^2 over proper rotations; a
    reflection solution is turned into a rotation by flipping the smallest
    singular direction.

    Args:
        mobile: N x 3 points to move
        target: N x 3 reference points
        weights: N non-negative weights (uniform when omitted)

    Raises:
        GeometryError: Mismatched counts, negative weights, fewer than 3
            positive weights
        DegenerateAlignmentError: Either point set has rank < 2
    """
    mobile, target = _check_pair(mobile, target, 3)
    n = mobile.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise GeometryError(f"expected {n} weights, got {w.shape[0]}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GeometryError("weights must be finite and non-negative")
    if np.count_nonzero(w > 0) < 3:
        raise GeometryError("need at least 3 strictly positive weights")

    w = w / w.sum()
    mobile_center = w @ mobile
    target_center = w @ target
    m = mobile - mobile_center
    t = target - target_center
    root = np.sqrt(w)[:, None]
    if _rank_below_two(root * m) or _rank_below_two(root * t):
        raise DegenerateAlignmentError("collinear or coincident points cannot define a superposition")

    covariance = (w[:, None] * m).T @ t
    u, _, vt = np.linalg.svd(covariance)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    rotation = vt.T @ correction @ u.T
    translation = target_center - rotation @ mobile_center
    return RigidTransform(rotation, translation)


def rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """
    Root mean square deviation without superposition.

    Raises:
        GeometryError: If the point counts differ or are zero
    """
    a, b = _check_pair(a, b, 1)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def superposed_rmsd(mobile: np.ndarray, target: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """RMSD after (weighted) Kabsch superposition of mobile onto target."""
    transform = kabsch(mobile, target, weights)
    return rmsd(transform.apply(mobile), target)


# ============================================================================
# TM-score
# ============================================================================

def tm_d0(length: int) -> float:
    """Distance scale d0 = 1.24 (L - 15)^(1/3) - 1.8, floored at 0.5 Å for L <= 21."""
    if length <= 21:
        return TM_MIN_D0
    return 1.24 * np.cbrt(length - 15) - 1.8


def tm_score_from_distances(distances: np.ndarray, length: Optional[int] = None) -> float:
    """(1/L) sum 1 / (1 + (d_i / d0)^2) for already superposed pairs."""
    distances = np.asarray(distances, dtype=float).reshape(-1)
    length = distances.shape[0] if length is None else length
    d0 = tm_d0(length)
    return float(np.sum(1.0 / (1.0 + (distances / d0) ** 2)) / length)


def tm_score(a: np.ndarray, b: np.ndarray) -> float:
    """
    Cα TM-score with positional residue correspondence.

    Superposition starts from Kabsch on all residues, then re-fits on the
    residues closer than d0, until the subset stops changing or
    TM_MAX_ITERATIONS re-fits. The best score seen is returned.

    Raises:
        GeometryError: Count mismatch or fewer than 3 residues
    """
    a, b = _check_pair(a, b, 3)
    length = a.shape[0]
    d0 = tm_d0(length)
    transform = kabsch(a, b)
    distances = np.linalg.norm(transform.apply(a) - b, axis=1)
    best = tm_score_from_distances(distances, length)
    subset = np.ones(length, dtype=bool)
    for iteration in range(TM_MAX_ITERATIONS):
        chosen = distances < d0
        if np.array_equal(chosen, subset) or np.count_nonzero(chosen) < 3:
            break
        subset = chosen
        try:
            transform = kabsch(a[subset], b[subset])
        except DegenerateAlignmentError:
            break
        distances = np.linalg.norm(transform.apply(a) - b, axis=1)
        best = max(best, tm_score_from_distances(distances, length))
        logger.debug("TM-score iteration %d: %d residues, score %.4f", iteration, subset.sum(), best)
    return best


# ============================================================================
# Structures
# ============================================================================

def transform_structure(structure: Structure, transform: RigidTransform) -> Structure:
    """Apply a rigid motion to every protein and ligand atom."""
    moved = structure.with_protein_coords(transform.apply(structure.protein_coords()))
    if structure.n_ligand_atoms:
        moved = moved.with_ligand_coords(transform.apply(structure.ligand_coords()))
    return moved


def pocket_weights(ca: np.ndarray, ligand: np.ndarray, scale: float = POCKET_WEIGHT_SCALE) -> np.ndarray:
    """Per-residue weights exp(-d_i / scale), d_i = distance to the nearest ligand atom."""
    ligand = np.asarray(ligand, dtype=float).reshape(-1, 3)
    if ligand.shape[0] == 0:
        raise GeometryError("pocket weighting needs at least one ligand atom")
    if scale <= 0:
        raise GeometryError("pocket weight scale must be positive")
    distances = np.linalg.norm(np.asarray(ca, dtype=float)[:, None, :] - ligand[None, :, :], axis=2)
    return np.exp(-distances.min(axis=1) / scale)


def pocket_weighted_transform(apo: Structure, holo: Structure, ligand: np.ndarray,
                              scale: float = POCKET_WEIGHT_SCALE) -> RigidTransform:
    """Transform taking apo Cα atoms onto holo Cα atoms with pocket weights."""
    if len(apo.residues) != len(holo.residues):
        raise GeometryError(f"residue mismatch: apo has {len(apo.residues)}, holo has {len(holo.residues)}")
    holo_ca = holo.ca_coords()
    return kabsch(apo.ca_coords(), holo_ca, pocket_weights(holo_ca, ligand, scale))


def pocket_weighted_align(apo: Structure, holo: Structure, ligand: np.ndarray,
                          scale: float = POCKET_WEIGHT_SCALE) -> Structure:
    """
    Superpose an apo structure onto its holo counterpart, weighting each
    residue by the proximity of its holo Cα to the crystal ligand.

    Raises:
        GeometryError: Residue count mismatch or empty ligand
    """
    return transform_structure(apo, pocket_weighted_transform(apo, holo, ligand, scale))


def pocket_residues(reference: Structure, ligand: np.ndarray, cutoff: float = POCKET_CUTOFF) -> np.ndarray:
    """Boolean mask of residues whose Cα lies within `cutoff` of a ligand atom."""
    ligand = np.asarray(ligand, dtype=float).reshape(-1, 3)
    if ligand.shape[0] == 0:
        raise GeometryError("pocket selection needs at least one ligand atom")
    distances = np.linalg.norm(reference.ca_coords()[:, None, :] - ligand[None, :, :], axis=2)
    return distances.min(axis=1) <= cutoff


def pocket_rmsd(model: Structure, reference: Structure, ligand: np.ndarray,
                cutoff: float = POCKET_CUTOFF) -> float:
    """
    Cα RMSD over pocket residues after pocket-weighted superposition.

    Raises:
        GeometryError: If no residue lies within `cutoff` of the ligand
    """
    mask = pocket_residues(reference, ligand, cutoff)
    if not mask.any():
        raise GeometryError(f"no residue within {cutoff} Å of the ligand")
    aligned = pocket_weighted_align(model, reference, ligand)
    return rmsd(aligned.ca_coords()[mask], reference.ca_coords()[mask])
