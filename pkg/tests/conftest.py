import os

# Pin BLAS pools to one thread before numpy loads anywhere in this process:
# the acceptance runtime budgets are stated for a single CPU core.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from tsception._tuning import tune_allocator

tune_allocator()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
