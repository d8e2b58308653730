"""blockfill: block-level imputation of urban density indices.

Reconstructs missing floor space index (fsi) and ground space index
(gsi) values for city blocks by combining morphological clustering with
neighborhood-based spatial interpolation, and benchmarks the methods
under a common-mask protocol.
"""

__version__ = "0.1.0"

from .model import BlockRecord, BlockTable, TargetPair, compute_fsi_gsi, validate_table

__all__ = [
    "BlockRecord",
    "BlockTable",
    "TargetPair",
    "compute_fsi_gsi",
    "validate_table",
    "__version__",
]
