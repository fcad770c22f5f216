"""Independent numerical cross-checks for the tsception toolkit.

Generates golden fixtures with a PyTorch reference (ops and a full model
forward driven by TSCK checkpoints) and compares them against outputs of
the primary implementation.  Speaks only the documented file formats.
"""

__version__ = "0.1.0"

from .fixtures import compare, emit_fixtures
from .formats import Checkpoint, read_checkpoint, write_checkpoint

__all__ = ["compare", "emit_fixtures", "Checkpoint", "read_checkpoint",
           "write_checkpoint", "__version__"]
