"""Dataset loading: canonical table documents, QA records and release adapters."""

from .canonical import (dump_canonical, load_canonical, load_canonical_file, serialize_canonical,
                        table_to_document)
from .dataset import Dataset, QAPair, Split, load_dataset, read_qa_file, write_dataset, write_qa_file
from .hitab import adapt_hitab, load_hitab
from .aitqa import AITQA_TAGS, adapt_aitqa, load_aitqa

__all__ = [
    "AITQA_TAGS", "Dataset", "QAPair", "Split", "adapt_aitqa", "adapt_hitab", "dump_canonical",
    "load_aitqa", "load_canonical", "load_canonical_file", "load_dataset", "load_hitab",
    "read_qa_file", "serialize_canonical", "table_to_document", "write_dataset", "write_qa_file",
]
