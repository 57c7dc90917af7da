"""
Unbalanced apo/holo coupling.

Independently drawn apo and holo structures are paired, and a pair is kept
only when its Cα TM-score reaches `tm_min` and its superposed Cα RMSD stays
below `rmsd_max`. Optional residue-count filters apply on top.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd

from .config import RMSD_MAX, TM_MIN
from .errors import ConfigError, GeometryError, HoloflowError
from .geometry import superposed_rmsd, tm_score
from .structures import Structure, read_pdb

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("id", "apo_path", "holo_path")
REPORT_COLUMNS = ("id", "tm", "rmsd", "accepted", "error")


@dataclass(frozen=True)
class CouplingCriteria:
    """
    Acceptance thresholds for apo/holo pairs.

    Attributes:
        tm_min: Minimum Cα TM-score (inclusive)
        rmsd_max: Maximum superposed Cα RMSD in Å (exclusive)
        min_residues: Optional lower bound on the residue count
        max_residues: Optional upper bound on the residue count
    """
    tm_min: float = TM_MIN
    rmsd_max: float = RMSD_MAX
    min_residues: Optional[int] = None
    max_residues: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.tm_min <= 1.0:
            raise ConfigError(f"tm_min must be in (0, 1], got {self.tm_min}")
        if not self.rmsd_max > 0:
            raise ConfigError(f"rmsd_max must be positive, got {self.rmsd_max}")
        if (self.min_residues is not None and self.max_residues is not None
                and self.min_residues > self.max_residues):
            raise ConfigError("min_residues exceeds max_residues")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CouplingDecision:
    tm: float
    rmsd: float
    accepted: bool


def decide(tm: float, rmsd: float, residues: int, criteria: CouplingCriteria) -> bool:
    """Accept iff tm >= tm_min, rmsd < rmsd_max and the length filters pass."""
    if criteria.min_residues is not None and residues < criteria.min_residues:
        return False
    if criteria.max_residues is not None and residues > criteria.max_residues:
        return False
    return tm >= criteria.tm_min and rmsd < criteria.rmsd_max


def evaluate_pair(apo: Structure, holo: Structure, criteria: Optional[CouplingCriteria] = None) -> CouplingDecision:
    """
    Score one apo/holo pair.

    Raises:
        GeometryError: If the residue counts differ
    """
    criteria = criteria or CouplingCriteria()
    apo_ca = apo.ca_coords()
    holo_ca = holo.ca_coords()
    if apo_ca.shape[0] != holo_ca.shape[0]:
        raise GeometryError(f"residue mismatch: apo has {apo_ca.shape[0]}, holo has {holo_ca.shape[0]}")
    tm = tm_score(apo_ca, holo_ca)
    rmsd = superposed_rmsd(apo_ca, holo_ca)
    return CouplingDecision(tm=tm, rmsd=rmsd, accepted=decide(tm, rmsd, apo_ca.shape[0], criteria))


def _resolve(path: str, base: Path) -> Path:
    candidate = Path(path)
    return candidate if candidate.is_absolute() else base / candidate


def _evaluate_row(row: dict, base: Path, criteria: CouplingCriteria) -> dict:
    record = {"id": row["id"], "tm": float("nan"), "rmsd": float("nan"), "accepted": False, "error": ""}
    try:
        apo = read_pdb(_resolve(row["apo_path"], base).read_text())
        holo = read_pdb(_resolve(row["holo_path"], base).read_text())
        decision = evaluate_pair(apo, holo, criteria)
    except (OSError, HoloflowError) as e:
        logger.warning("pair %s: %s", row["id"], e)
        record["error"] = str(e)
        return record
    record.update(tm=decision.tm, rmsd=decision.rmsd, accepted=decision.accepted)
    return record


def filter_manifest(manifest: pd.DataFrame, criteria: Optional[CouplingCriteria] = None,
                    base: Path = Path("."), jobs: int = 1) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Apply the coupling filter to every manifest row.

    Rows are independent and may be evaluated concurrently; report rows keep
    the manifest's order. Unreadable or invalid pairs are marked errored and
    rejected.

    Args:
        manifest: Rows with columns id, apo_path, holo_path
        criteria: Acceptance thresholds
        base: Directory that relative paths are resolved against
        jobs: Worker count

    Returns:
        (accepted manifest rows, report with columns id, tm, rmsd, accepted, error)
    """
    criteria = criteria or CouplingCriteria()
    missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
    if missing:
        raise ConfigError(f"manifest lacks column(s): {', '.join(missing)}")
    rows = manifest.astype({"id": str}).to_dict("records")
    if jobs < 1:
        raise ConfigError(f"jobs must be positive, got {jobs}")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        records: List[dict] = list(pool.map(lambda row: _evaluate_row(row, base, criteria), rows))
    report = pd.DataFrame(records, columns=list(REPORT_COLUMNS))
    accepted = manifest[report["accepted"].to_numpy(dtype=bool)] if len(manifest) else manifest
    if records:
        logger.info("coupling: accepted %d of %d pairs (%.1f%%)",
                    len(accepted), len(records), 100.0 * len(accepted) / len(records))
    else:
        logger.info("coupling: empty manifest")
    return accepted.reset_index(drop=True), report
