"""Matrix completion for rating data by CutNMF, with metrics and baselines."""
import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe; its version check warns on older installs
    numba.config.THREADING_LAYER = "omp"

__version__ = "0.1.0"
