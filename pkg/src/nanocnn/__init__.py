"""nanocnn: a self-contained CNN training micro-framework.

Tensors ride on numpy; convolution, pooling, batch norm, reverse-mode
autodiff, the Adam optimizer, the model builders, and the data/augment
pipeline are all implemented here. See the CLI (``nanocnn --help``) for
the experiment workflow.
"""

import os

# Propagate the thread cap to the BLAS runtimes before numpy loads them.
# Must happen on first package import for the cap to take effect.
_cap = os.environ.get("NANOCNN_NUM_THREADS", "").strip()
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _cap)
del os, _cap

__version__ = "0.1.0"
