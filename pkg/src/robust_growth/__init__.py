"""Principal eigenpairs, tilted diffusions and robust growth-optimal wealth.

Modules: ``model`` (domains and covariance fields), ``eigen1d`` (one-dimensional
eigenvalue solver and classification tests), ``closedform`` (explicit
eigenpairs and the example registry), ``sde`` (path simulation), ``growth``
(wealth processes and diagnostics) and ``cli``.
"""

import os
import warnings

# The parallel pool size is fixed when numba loads; leave room for 8 workers.
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
warnings.filterwarnings("ignore", message=".*TBB.*")

from .errors import RobustGrowthError  # noqa: E402

__version__ = "0.1.0"
__all__ = ["RobustGrowthError", "__version__"]
