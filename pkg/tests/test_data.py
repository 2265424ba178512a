"""Tests for ingestion, centering and the cis-map parser."""

from pathlib import Path

import numpy as np
import pytest

from fibag.data.biomarker_map import (
    DanglingIndex,
    DuplicateBiomarkerId,
    MalformedRecord,
    load_biomarker_map,
    parse_biomarker_map,
)
from fibag.data.loader import (
    DuplicateSampleId,
    EmptyIntersection,
    NonNumericCell,
    load_dataset,
    read_matrix,
)
from fibag.data.models import (
    ContinuousOutcome,
    IngestConfig,
    MissingValue,
    NotCentered,
    SurvivalOutcome,
    center_columns,
)
from fibag.errors import DataFormatError
from tests.conftest import make_dataset


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _tiny_files(tmp_path: Path) -> IngestConfig:
    genes = _write(tmp_path / "genes.csv", "sample_id,A,B\ns1,1,5\ns2,2,5\ns3,3,5\ns4,4,5\n")
    cna = _write(tmp_path / "cna.csv", "sample_id,A,B\ns1,0.1,1\ns2,0.2,2\ns3,0.3,4\n")
    outcome = _write(tmp_path / "y.csv", "sample_id,value\ns3,3.0\ns2,2.0\ns1,1.0\ns4,4.0\n")
    return IngestConfig(upstream={"cna": cna}, genes=genes, outcome=outcome)


class TestCenterColumns:
    def test_two_values(self):
        np.testing.assert_allclose(center_columns(np.array([[2.0], [4.0]])), [[-1.0], [1.0]])

    def test_idempotent(self, rng):
        m = rng.standard_normal((10, 4)) * 5 + 3
        once = center_columns(m)
        np.testing.assert_allclose(center_columns(once), once, atol=1e-12)
        np.testing.assert_allclose(once.mean(axis=0), 0.0, atol=1e-12)

    def test_constant_column(self):
        np.testing.assert_array_equal(center_columns(np.full((3, 1), 5.0)), np.zeros((3, 1)))


class TestLoadDataset:
    def test_intersection_drops_missing_sample(self, tmp_path):
        ds = load_dataset(_tiny_files(tmp_path))
        assert ds.n == 3
        assert ds.sample_ids == ("s1", "s2", "s3")
        assert ds.dropped_samples == ("s4",)

    def test_outcome_follows_sample_order(self, tmp_path):
        ds = load_dataset(_tiny_files(tmp_path))
        np.testing.assert_array_equal(ds.outcome.y, [1.0, 2.0, 3.0])

    def test_centering_applied(self, tmp_path):
        ds = load_dataset(_tiny_files(tmp_path))
        np.testing.assert_allclose(ds.genes[:, 0], [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(ds.genes[:, 1], 0.0)
        assert ds.genes_centered
        ds.require_centered()

    def test_centering_off(self, tmp_path):
        config = _tiny_files(tmp_path).model_copy(update={"center_genes": False})
        ds = load_dataset(config)
        np.testing.assert_array_equal(ds.genes[:, 0], [1.0, 2.0, 3.0])
        with pytest.raises(NotCentered):
            ds.require_centered()

    def test_reload_is_bit_identical(self, tmp_path):
        config = _tiny_files(tmp_path)
        first, second = load_dataset(config), load_dataset(config)
        assert first.genes.tobytes() == second.genes.tobytes()
        assert first.upstream.tobytes() == second.upstream.tobytes()

    def test_upstream_platform_labels(self, tmp_path):
        ds = load_dataset(_tiny_files(tmp_path))
        assert ds.upstream_labels == ("cna:A", "cna:B")

    def test_empty_intersection(self, tmp_path):
        config = _tiny_files(tmp_path)
        _write(config.outcome, "sample_id,value\nx1,1\nx2,2\n")
        with pytest.raises(EmptyIntersection):
            load_dataset(config)

    def test_survival_outcome_is_log_time(self, tmp_path):
        config = _tiny_files(tmp_path)
        _write(config.outcome, "sample_id,time,event\ns1,1.0,1\ns2,2.718281828459045,0\ns3,10,1\n")
        ds = load_dataset(config)
        assert isinstance(ds.outcome, SurvivalOutcome)
        np.testing.assert_allclose(ds.outcome.z, [0.0, 1.0, np.log(10.0)])
        np.testing.assert_array_equal(ds.outcome.censored, [False, True, False])

    def test_missing_file_names_path(self, tmp_path):
        config = _tiny_files(tmp_path).model_copy(update={"genes": tmp_path / "absent.csv"})
        with pytest.raises(FileNotFoundError, match="absent.csv"):
            load_dataset(config)

    def test_example_dataset(self, example_dir):
        config = IngestConfig(
            upstream={"cna": example_dir / "cna.csv", "meth": example_dir / "meth.csv"},
            genes=example_dir / "genes.csv",
            proteins=example_dir / "proteins.csv",
            covariates=example_dir / "covariates.csv",
            outcome=example_dir / "outcome.csv",
        )
        ds = load_dataset(config)
        assert ds.n == 40
        assert ds.gene_ids == ("TP53", "MYC", "EGFR")
        assert ds.protein_ids == ("p53", "cMYC", "pAKT")
        assert ds.upstream.shape == (40, 6)
        assert ds.n_covariates == 1


class TestReadMatrix:
    def test_na_cell_is_rejected_with_position(self, tmp_path):
        path = _write(tmp_path / "m.csv", "sample_id,A,B\ns1,1,2\ns2,NA,3\n")
        with pytest.raises(NonNumericCell) as info:
            read_matrix(path)
        assert info.value.sample_id == "s2"
        assert info.value.column == "A"
        assert "'NA'" in str(info.value)

    def test_duplicate_sample(self, tmp_path):
        path = _write(tmp_path / "m.csv", "sample_id,A\ns1,1\ns1,2\n")
        with pytest.raises(DuplicateSampleId):
            read_matrix(path)

    def test_tab_separated(self, tmp_path):
        path = _write(tmp_path / "m.tsv", "sample_id\tA\ns1\t1.5\n")
        assert read_matrix(path).loc["s1", "A"] == 1.5

    def test_permuted_rows_align(self, tmp_path):
        config = _tiny_files(tmp_path)
        _write(config.genes, "sample_id,A,B\ns3,3,5\ns1,1,5\ns2,2,5\n")
        ds = load_dataset(config.model_copy(update={"center_genes": False}))
        assert ds.sample_ids == ("s3", "s1", "s2")
        np.testing.assert_array_equal(ds.upstream[:, 0], [0.3, 0.1, 0.2])
        np.testing.assert_array_equal(ds.outcome.y, [3.0, 1.0, 2.0])


class TestOutcomes:
    def test_non_finite_rejected(self):
        with pytest.raises(MissingValue):
            ContinuousOutcome(np.array([1.0, np.nan]))

    def test_event_indicator_must_be_binary(self):
        with pytest.raises(DataFormatError):
            SurvivalOutcome(np.zeros(2), np.array([1.0, 2.0]))

    def test_dataset_is_read_only(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            ds.genes[0, 0] = 1.0


class TestBiomarkerMap:
    def _dataset(self):
        ds = make_dataset(n=10, q_genes=3, q_proteins=2)
        return ds

    def test_gene_and_protein_records(self):
        ds = self._dataset()
        biomarkers = parse_biomarker_map(
            ["# comment", "gene g0 cna:u0,u1", "protein p0 g0 u0", "protein p1 - 2", ""], ds
        )
        assert biomarkers.genes[0].upstream == (0, 1)
        assert biomarkers.proteins[0].coding_gene == 0
        assert biomarkers.proteins[0].has_cascade
        assert not biomarkers.proteins[1].has_cascade
        assert biomarkers.proteins[1].upstream == (2,)
        assert len(biomarkers) == 3

    def test_index_out_of_range(self):
        with pytest.raises(DanglingIndex):
            parse_biomarker_map(["gene g0 4"], self._dataset())

    def test_unknown_gene(self):
        with pytest.raises(DanglingIndex):
            parse_biomarker_map(["gene nope u0"], self._dataset())

    def test_unknown_coding_gene(self):
        with pytest.raises(DanglingIndex):
            parse_biomarker_map(["protein p0 nope u0"], self._dataset())

    def test_duplicate_record(self):
        with pytest.raises(DuplicateBiomarkerId):
            parse_biomarker_map(["gene g0 u0", "gene g0 u1"], self._dataset())

    def test_malformed_record(self):
        with pytest.raises(MalformedRecord):
            parse_biomarker_map(["gene g0"], self._dataset())

    def test_example_map(self, example_dir):
        config = IngestConfig(
            upstream={"cna": example_dir / "cna.csv", "meth": example_dir / "meth.csv"},
            genes=example_dir / "genes.csv",
            proteins=example_dir / "proteins.csv",
            outcome=example_dir / "outcome.csv",
        )
        ds = load_dataset(config)
        biomarkers = load_biomarker_map(example_dir / "map.txt", ds)
        assert len(biomarkers.genes) == 3
        assert [p.has_cascade for p in biomarkers.proteins] == [True, True, False]

    def test_missing_map_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="map.txt"):
            load_biomarker_map(tmp_path / "map.txt", self._dataset())
