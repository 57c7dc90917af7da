"""
Tests for symmetry-corrected RMSD, success rates and affinity metrics
"""

import numpy as np
import pandas as pd
import pytest

from holoflow.errors import ConfigError, EvaluationError
from holoflow.evaluation import (
    AGGREGATE_ID,
    REPORT_COLUMNS,
    affinity_metrics,
    evaluate_manifest,
    ligand_points,
    score_complex,
    success_rate,
    symmetry_rmsd,
)
from holoflow.molgraph import parse_smiles
from holoflow.structures import write_pdb


def hexagon(radius=1.4):
    angles = np.deg2rad(60.0 * np.arange(6))
    return np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(6)])


class TestSymmetryRMSD:
    """Minimum RMSD over graph automorphisms."""

    def test_benzene_rotated_labels(self):
        reference = hexagon()
        shifted = np.roll(reference, 1, axis=0)
        result = symmetry_rmsd(parse_smiles("c1ccccc1"), shifted, reference)
        assert result.value == pytest.approx(0.0, abs=1e-12)
        assert not result.truncated

    def test_never_above_plain_rmsd(self, rng):
        graph = parse_smiles("CC(C)(C)O")
        predicted = rng.normal(size=(5, 3))
        reference = rng.normal(size=(5, 3))
        plain = np.sqrt(np.mean(np.sum((predicted - reference) ** 2, axis=1)))
        assert symmetry_rmsd(graph, predicted, reference).value <= plain + 1e-12

    @pytest.mark.slow
    def test_never_above_plain_rmsd_over_many_perturbations(self, rng):
        graph = parse_smiles("CC(C)(C)O")
        reference = rng.normal(scale=1.5, size=(5, 3))
        for _ in range(1000):
            predicted = reference + rng.normal(scale=rng.uniform(0.1, 3.0), size=(5, 3))
            plain = np.sqrt(np.mean(np.sum((predicted - reference) ** 2, axis=1)))
            assert symmetry_rmsd(graph, predicted, reference).value <= plain + 1e-12

    def test_asymmetric_equals_plain(self, rng):
        graph = parse_smiles("CCO")
        predicted = rng.normal(size=(3, 3))
        reference = rng.normal(size=(3, 3))
        plain = np.sqrt(np.mean(np.sum((predicted - reference) ** 2, axis=1)))
        assert symmetry_rmsd(graph, predicted, reference).value == pytest.approx(plain)

    def test_no_superposition(self):
        reference = hexagon()
        moved = reference + np.array([1.0, 0.0, 0.0])
        assert symmetry_rmsd(parse_smiles("c1ccccc1"), moved, reference).value == pytest.approx(1.0)

    def test_fragments_relabelled_independently(self):
        graph = parse_smiles("CC.CC")
        reference = np.array([[0.0, 0, 0], [1, 0, 0], [5, 0, 0], [6, 0, 0]])
        predicted = reference[[1, 0, 2, 3]]
        assert symmetry_rmsd(graph, predicted, reference).value == pytest.approx(0.0)

    def test_truncated_falls_back_to_identity(self):
        reference = hexagon()
        shifted = np.roll(reference, 1, axis=0)
        result = symmetry_rmsd(parse_smiles("c1ccccc1"), shifted, reference, cap=1)
        assert result.truncated
        assert result.value == pytest.approx(1.4)

    def test_count_mismatch(self):
        with pytest.raises(EvaluationError):
            symmetry_rmsd(parse_smiles("CC"), np.zeros((3, 3)), np.zeros((3, 3)))


class TestSuccessRate:
    """Fraction at or below the threshold."""

    def test_threshold_is_inclusive(self):
        assert success_rate([1.0, 2.0, 2.5, 3.0]) == 0.5

    def test_custom_threshold(self):
        assert success_rate([0.5, 1.5], threshold=1.0) == 0.5

    def test_empty(self):
        with pytest.raises(EvaluationError):
            success_rate([])


class TestAffinityMetrics:
    """Pearson, Spearman, RMSE and MAE."""

    def test_known_values(self):
        metrics = affinity_metrics([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
        assert metrics.pearson == pytest.approx(1.0)
        assert metrics.spearman == pytest.approx(1.0)
        assert metrics.rmse == pytest.approx(np.sqrt(14.0 / 3.0))
        assert metrics.mae == pytest.approx(2.0)

    def test_anticorrelated(self):
        metrics = affinity_metrics([1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0])
        assert metrics.pearson == pytest.approx(-1.0)
        assert metrics.spearman == pytest.approx(-1.0)

    def test_spearman_uses_average_ranks(self):
        metrics = affinity_metrics([1.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        assert metrics.spearman == pytest.approx(np.sqrt(3.0) / 2.0)

    def test_constant_input_has_no_correlation(self):
        metrics = affinity_metrics([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])
        assert metrics.pearson is None
        assert metrics.spearman is None
        assert metrics.mae == pytest.approx(3.0)

    @pytest.mark.slow
    def test_rmse_never_below_mae(self, rng):
        for _ in range(10_000):
            n = int(rng.integers(2, 30))
            metrics = affinity_metrics(rng.normal(size=n), rng.normal(scale=3.0, size=n))
            assert metrics.rmse >= metrics.mae - 1e-12

    def test_too_few_values(self):
        with pytest.raises(EvaluationError):
            affinity_metrics([1.0], [1.0])

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError, match="mismatch"):
            affinity_metrics([1.0, 2.0], [1.0, 2.0, 3.0])


class TestScoreComplex:
    """Per-complex scoring in the pocket frame."""

    def test_identical_complex(self, toy_holo):
        score = score_complex("toy", toy_holo, toy_holo, parse_smiles("C"))
        assert score.ligand_rmsd == pytest.approx(0.0, abs=1e-8)
        assert score.success
        assert score.pocket_rmsd == pytest.approx(0.0, abs=1e-8)

    def test_displaced_ligand_fails(self, toy_holo):
        moved = toy_holo.with_ligand_coords(toy_holo.ligand_coords() + np.array([0.0, 0.0, 3.0]))
        score = score_complex("toy", moved, toy_holo, parse_smiles("C"))
        assert score.symmetry_rmsd == pytest.approx(3.0, abs=0.05)
        assert not score.success

    def test_ligand_points_in_graph_order(self, toy_holo):
        np.testing.assert_array_equal(ligand_points(toy_holo, parse_smiles("C")), toy_holo.ligand_coords())


class TestEvaluateManifest:
    """Batch reports."""

    @pytest.fixture
    def files(self, tmp_path, toy_holo):
        (tmp_path / "ref.pdb").write_text(write_pdb(toy_holo))
        moved = toy_holo.with_ligand_coords(toy_holo.ligand_coords() + np.array([0.0, 0.0, 3.0]))
        (tmp_path / "far.pdb").write_text(write_pdb(moved))
        return tmp_path

    def test_report_rows_and_aggregate(self, files):
        manifest = pd.DataFrame({
            "id": ["hit", "miss", "other"],
            "predicted_path": ["ref.pdb", "far.pdb", "ref.pdb"],
            "reference_path": ["ref.pdb", "ref.pdb", "ref.pdb"],
            "smiles": ["C", "C", "C"],
            "predicted_affinity": [6.0, 5.0, 7.5],
            "true_affinity": [6.5, 4.0, 8.0],
        })
        report = evaluate_manifest(manifest, base=files)
        assert report.success_rate == pytest.approx(2 / 3)
        frame = report.to_frame()
        assert list(frame.columns) == list(REPORT_COLUMNS)
        assert list(frame["id"]) == ["hit", "miss", "other", AGGREGATE_ID]
        assert frame.iloc[-1]["success"] == pytest.approx(2 / 3)
        assert frame.iloc[-1]["pearson"] == pytest.approx(report.affinity.pearson)

    def test_unlabelled_manifest_has_no_affinity(self, files):
        manifest = pd.DataFrame({"id": ["a"], "predicted_path": ["ref.pdb"],
                                 "reference_path": ["ref.pdb"], "smiles": ["C"]})
        report = evaluate_manifest(manifest, base=files)
        assert report.affinity is None
        assert np.isnan(report.to_frame().iloc[-1]["rmse"])

    def test_bad_row(self, files):
        manifest = pd.DataFrame({"id": ["a"], "predicted_path": ["absent.pdb"],
                                 "reference_path": ["ref.pdb"], "smiles": ["C"]})
        with pytest.raises(EvaluationError, match="row a"):
            evaluate_manifest(manifest, base=files)

    def test_empty(self):
        with pytest.raises(EvaluationError):
            evaluate_manifest(pd.DataFrame(columns=["id", "predicted_path", "reference_path", "smiles"]))

    def test_missing_column(self):
        with pytest.raises(ConfigError):
            evaluate_manifest(pd.DataFrame({"id": ["a"]}))
