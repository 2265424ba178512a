"""Parse the line-oriented cis-map into index form against a dataset.

Record formats::

    gene <gene_id> <upstream_col,...>
    protein <protein_id> <gene_id|-> <upstream_col,...>

An upstream column is ``platform:feature``, a bare feature id that is unique
across platforms, or a 0-based integer index into the upstream matrix.
Blank lines and lines starting with ``#`` are ignored.
"""

import logging
from pathlib import Path

from fibag.data.models import BiomarkerMap, GeneEntry, OmicsDataset, ProteinEntry
from fibag.errors import DataFormatError

logger = logging.getLogger(__name__)

NO_CODING_GENE = "-"


class DanglingIndex(DataFormatError):
    """Raised when a map record references a column or biomarker that does not exist."""


class DuplicateBiomarkerId(DataFormatError):
    """Raised when a gene or protein id has more than one record."""


class MalformedRecord(DataFormatError):
    """Raised when a map line does not follow the record grammar."""


class _UpstreamResolver:
    def __init__(self, dataset: OmicsDataset) -> None:
        self._size = len(dataset.upstream_ids)
        self._qualified = {label: i for i, label in enumerate(dataset.upstream_labels)}
        self._bare: dict[str, list[int]] = {}
        for i, feature in enumerate(dataset.upstream_ids):
            self._bare.setdefault(feature, []).append(i)

    def resolve(self, token: str, where: str) -> int:
        if token in self._qualified:
            return self._qualified[token]
        if token.lstrip("-").isdigit():
            index = int(token)
            if not 0 <= index < self._size:
                raise DanglingIndex(f"{where}: upstream index {index} outside [0, {self._size})")
            return index
        matches = self._bare.get(token, [])
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise DanglingIndex(f"{where}: upstream column {token!r} is ambiguous, qualify it")
        raise DanglingIndex(f"{where}: unknown upstream column {token!r}")

    def resolve_list(self, field: str, where: str) -> tuple[int, ...]:
        tokens = [t.strip() for t in field.split(",") if t.strip()]
        if not tokens:
            raise MalformedRecord(f"{where}: empty upstream column list")
        return tuple(self.resolve(t, where) for t in tokens)


def parse_biomarker_map(lines: list[str], dataset: OmicsDataset, source: str = "<map>") -> BiomarkerMap:
    resolver = _UpstreamResolver(dataset)
    gene_index = {g: i for i, g in enumerate(dataset.gene_ids)}
    protein_index = {p: i for i, p in enumerate(dataset.protein_ids)}

    genes: list[GeneEntry] = []
    proteins: list[ProteinEntry] = []
    seen: set[tuple[str, str]] = set()

    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        fields = text.split()
        kind = fields[0].lower()

        if kind == "gene" and len(fields) == 3:
            _, gene_id, cols = fields
            if ("gene", gene_id) in seen:
                raise DuplicateBiomarkerId(f"{where}: gene {gene_id!r} listed twice")
            if gene_id not in gene_index:
                raise DanglingIndex(f"{where}: gene {gene_id!r} not in the gene matrix")
            seen.add(("gene", gene_id))
            genes.append(GeneEntry(gene_id, gene_index[gene_id], resolver.resolve_list(cols, where)))

        elif kind == "protein" and len(fields) == 4:
            _, protein_id, coding, cols = fields
            if ("protein", protein_id) in seen:
                raise DuplicateBiomarkerId(f"{where}: protein {protein_id!r} listed twice")
            if protein_id not in protein_index:
                raise DanglingIndex(f"{where}: protein {protein_id!r} not in the protein matrix")
            coding_index = None
            if coding != NO_CODING_GENE:
                if coding not in gene_index:
                    raise DanglingIndex(f"{where}: coding gene {coding!r} not in the gene matrix")
                coding_index = gene_index[coding]
            else:
                logger.debug("%s: protein %s has no coding gene, driver axis only", where, protein_id)
            seen.add(("protein", protein_id))
            proteins.append(
                ProteinEntry(
                    protein_id, protein_index[protein_id], coding_index,
                    resolver.resolve_list(cols, where),
                )
            )

        else:
            raise MalformedRecord(f"{where}: cannot parse record {text!r}")

    return BiomarkerMap(genes=tuple(genes), proteins=tuple(proteins))


def load_biomarker_map(path: Path, dataset: OmicsDataset) -> BiomarkerMap:
    """Load and validate a cis-map file against ``dataset``'s column ids."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such biomarker map: {path}")
    biomarkers = parse_biomarker_map(path.read_text().splitlines(), dataset, source=str(path))
    logger.info(
        "Loaded biomarker map %s: %d genes, %d proteins (%d with a coding gene)",
        path, len(biomarkers.genes), len(biomarkers.proteins),
        sum(p.has_cascade for p in biomarkers.proteins),
    )
    return biomarkers
