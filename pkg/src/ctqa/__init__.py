"""Question answering over complex (hierarchical) tables with a completion model.

Tables are re-encoded as header and cell tuples, prompted in one turn when
they fit the model's context and in three turns with a retrieval step when
they do not, and scored with an explicit answer-equivalence policy.
"""

__version__ = "0.1.0"

from .errors import CtqaError
from .table_model import Axis, CellGrid, HeaderNode, HeaderTree, SourceTable, header, header_leaves, validate_table
from .reconstruct import DataTuple, HeaderTuple, ReconstructedTable, reconstruct, serialize_table, serialize_tuple
from .retrieval import parse_tuples, select_cells

__all__ = [
    "Axis", "CellGrid", "CtqaError", "DataTuple", "HeaderNode", "HeaderTree", "HeaderTuple",
    "ReconstructedTable", "SourceTable", "header", "header_leaves", "parse_tuples", "reconstruct",
    "select_cells", "serialize_table", "serialize_tuple", "validate_table",
]
