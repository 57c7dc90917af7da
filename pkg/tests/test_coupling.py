"""
Tests for apo/holo coupling
"""

import numpy as np
import pandas as pd
import pytest

from holoflow.coupling import (
    REPORT_COLUMNS,
    CouplingCriteria,
    decide,
    evaluate_pair,
    filter_manifest,
)
from holoflow.errors import ConfigError, GeometryError
from holoflow.structures import write_pdb


class TestDecide:
    """Acceptance rule tm >= tm_min and rmsd < rmsd_max."""

    @pytest.mark.parametrize("tm, rmsd, accepted", [
        (0.9, 1.0, True),
        (0.7, 1.0, True),
        (0.69, 1.0, False),
        (0.9, 4.99, True),
        (0.9, 5.0, False),
        (0.5, 6.0, False),
    ])
    def test_truth_table(self, tm, rmsd, accepted):
        assert decide(tm, rmsd, 100, CouplingCriteria()) is accepted

    def test_length_filters(self):
        criteria = CouplingCriteria(min_residues=10, max_residues=20)
        assert not decide(1.0, 0.0, 9, criteria)
        assert decide(1.0, 0.0, 10, criteria)
        assert decide(1.0, 0.0, 20, criteria)
        assert not decide(1.0, 0.0, 21, criteria)

    def test_no_length_filter_by_default(self):
        assert decide(1.0, 0.0, 1, CouplingCriteria())

    def test_tightening_never_accepts_more(self, rng):
        for _ in range(1000):
            tm, rmsd = rng.uniform(0.0, 1.0), rng.uniform(0.0, 10.0)
            loose = CouplingCriteria(tm_min=rng.uniform(0.01, 1.0), rmsd_max=rng.uniform(0.1, 10.0))
            strict = CouplingCriteria(tm_min=rng.uniform(loose.tm_min, 1.0),
                                      rmsd_max=rng.uniform(0.05, loose.rmsd_max))
            if decide(tm, rmsd, 50, strict):
                assert decide(tm, rmsd, 50, loose)


class TestCriteria:
    """Validation."""

    def test_tm_out_of_range(self):
        with pytest.raises(ConfigError):
            CouplingCriteria(tm_min=1.5)

    def test_rmsd_non_positive(self):
        with pytest.raises(ConfigError):
            CouplingCriteria(rmsd_max=0.0)

    def test_inverted_length_filter(self):
        with pytest.raises(ConfigError):
            CouplingCriteria(min_residues=30, max_residues=20)


class TestEvaluatePair:
    """Scoring a single pair."""

    def test_identical_structures(self, make_structure, helix_ca):
        structure = make_structure(helix_ca)
        decision = evaluate_pair(structure, structure)
        assert decision.tm == pytest.approx(1.0)
        assert decision.rmsd == pytest.approx(0.0, abs=1e-8)
        assert decision.accepted

    def test_unrelated_structures_rejected(self, make_structure, helix_ca, rng):
        scrambled = make_structure(rng.normal(scale=15.0, size=helix_ca.shape))
        decision = evaluate_pair(make_structure(helix_ca), scrambled)
        assert not decision.accepted

    def test_residue_mismatch(self, make_structure, helix_ca):
        with pytest.raises(GeometryError):
            evaluate_pair(make_structure(helix_ca), make_structure(helix_ca[:-2]))


@pytest.fixture
def pair_files(tmp_path, make_structure, helix_ca, rng):
    (tmp_path / "a_apo.pdb").write_text(write_pdb(make_structure(helix_ca)))
    (tmp_path / "a_holo.pdb").write_text(write_pdb(make_structure(helix_ca + 0.1)))
    (tmp_path / "b_apo.pdb").write_text(write_pdb(make_structure(helix_ca)))
    (tmp_path / "b_holo.pdb").write_text(write_pdb(make_structure(rng.normal(scale=15.0, size=helix_ca.shape))))
    return tmp_path


class TestFilterManifest:
    """Batch filtering with a report."""

    def manifest(self):
        return pd.DataFrame({
            "id": ["a", "b", "c"],
            "apo_path": ["a_apo.pdb", "b_apo.pdb", "missing.pdb"],
            "holo_path": ["a_holo.pdb", "b_holo.pdb", "a_holo.pdb"],
        })

    def test_accepts_and_reports(self, pair_files):
        accepted, report = filter_manifest(self.manifest(), base=pair_files)
        assert list(accepted["id"]) == ["a"]
        assert list(report.columns) == list(REPORT_COLUMNS)
        assert list(report["id"]) == ["a", "b", "c"]
        assert list(report["accepted"]) == [True, False, False]

    def test_missing_file_is_errored(self, pair_files):
        _, report = filter_manifest(self.manifest(), base=pair_files)
        assert report.loc[2, "error"] != ""
        assert np.isnan(report.loc[2, "tm"])

    def test_parallel_matches_serial(self, pair_files):
        _, serial = filter_manifest(self.manifest(), base=pair_files, jobs=1)
        _, parallel = filter_manifest(self.manifest(), base=pair_files, jobs=3)
        pd.testing.assert_frame_equal(serial, parallel)

    def test_empty_manifest(self):
        empty = pd.DataFrame(columns=["id", "apo_path", "holo_path"])
        accepted, report = filter_manifest(empty)
        assert len(accepted) == 0
        assert len(report) == 0

    def test_missing_column(self):
        with pytest.raises(ConfigError, match="apo_path"):
            filter_manifest(pd.DataFrame({"id": ["a"], "holo_path": ["x.pdb"]}))

    def test_bad_jobs(self, pair_files):
        with pytest.raises(ConfigError):
            filter_manifest(self.manifest(), base=pair_files, jobs=0)
