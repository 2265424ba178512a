import pandas as pd
import pytest

from fibag.data.biomarker_map import load_biomarker_map, parse_biomarker_map
from fibag.data.loader import load_dataset
from fibag.errors import DataFormatError
from fibag.mechanistic.models import Axis, EvidenceClass
from fibag.mechanistic.suite import results_from_table, run_mechanistic_suite, summarize_evidence
from tests.conftest import EXAMPLE_DIR, example_ingest


@pytest.fixture(scope="module")
def example():
    ds = load_dataset(example_ingest())
    return ds, load_biomarker_map(EXAMPLE_DIR / "map.txt", ds)


@pytest.fixture(scope="module")
def example_suite(example):
    ds, biomarkers = example
    return run_mechanistic_suite(ds, biomarkers)


def test_example_produces_every_axis(example_suite):
    assert len(example_suite.results) == 8
    assert example_suite.failures == ()
    axes = [r.axis for r in example_suite.results]
    assert axes.count(Axis.DRIVER_GENE) == 3
    assert axes.count(Axis.DRIVER_PROTEIN) == 3
    assert axes.count(Axis.CASCADING_PROTEIN) == 2


def test_results_sorted_by_axis_then_id(example_suite):
    keys = [(list(Axis).index(r.axis), r.biomarker_id) for r in example_suite.results]
    assert keys == sorted(keys)


def test_cascading_axis_has_extra_input(example_suite):
    cascading = {r.biomarker_id: r.n_inputs for r in example_suite.results
                 if r.axis is Axis.CASCADING_PROTEIN}
    assert cascading == {"cMYC": 2, "p53": 3}


def test_map_order_does_not_matter(example, example_suite):
    ds, _ = example
    lines = (EXAMPLE_DIR / "map.txt").read_text().splitlines()
    reversed_map = parse_biomarker_map(list(reversed(lines)), ds)
    again = run_mechanistic_suite(ds, reversed_map)
    assert [r.to_row() for r in again.results] == [r.to_row() for r in example_suite.results]


def test_parallel_matches_serial(example, example_suite):
    ds, biomarkers = example
    parallel = run_mechanistic_suite(ds, biomarkers, jobs=2)
    assert [r.to_row() for r in parallel.results] == [r.to_row() for r in example_suite.results]


def test_evidence_class_matches_lbf(example_suite):
    for result in example_suite.results:
        if result.lbf >= 2.0:
            assert result.evidence_class is EvidenceClass.DECISIVE
        elif result.lbf < 0.5:
            assert result.evidence_class is EvidenceClass.NONE


def test_raw_dataset_rejected(example):
    ds, biomarkers = example
    raw = load_dataset(example_ingest().model_copy(update={"center_genes": False}))
    with pytest.raises(DataFormatError):
        run_mechanistic_suite(raw, biomarkers)


class TestSummarizeEvidence:
    def test_counts_include_zero_cells(self, example_suite):
        summary = summarize_evidence(example_suite.results)
        assert len(summary) == len(Axis) * len(EvidenceClass)
        assert summary["count"].sum() == 8
        per_axis = summary.groupby("axis")["count"].sum().to_dict()
        assert per_axis == {"driver_gene": 3, "driver_protein": 3, "cascading_protein": 2}

    def test_empty(self):
        summary = summarize_evidence([])
        assert (summary["count"] == 0).all()


class TestResultsFromTable:
    def test_rebuilds_written_rows(self, example_suite):
        table = pd.DataFrame([r.to_row() for r in reversed(example_suite.results)])
        rebuilt = results_from_table(table)
        assert [(r.biomarker_id, r.axis, r.lbf, r.evidence_class) for r in rebuilt] == [
            (r.biomarker_id, r.axis, r.lbf, r.evidence_class) for r in example_suite.results
        ]

    def test_missing_column(self):
        with pytest.raises(DataFormatError, match="lbf"):
            results_from_table(pd.DataFrame({"biomarker_id": ["a"], "axis": ["driver_gene"]}))

    def test_unknown_axis(self):
        table = pd.DataFrame({"biomarker_id": ["a"], "axis": ["sideways"], "lbf": [0.1]})
        with pytest.raises(DataFormatError, match="sideways"):
            results_from_table(table)
