import os
import sys

# single-threaded BLAS keeps runs bitwise reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .harness.cli import main  # noqa: E402

sys.exit(main())
