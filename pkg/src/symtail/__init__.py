"""symtail: heavy-tailed symbol distribution toolkit.

Models, fits, and exercises the variance-normalized Student's t family that
arises when a power-constrained encoder trades source efficiency against
channel throughput: closed-form densities and sampling, a maximum-entropy
solver for the payload-constrained problem, KDE and tail-index estimation,
AWGN channel and mutual-information utilities, and a small trainable
source-channel codec.
"""

import os as _os

# Cap BLAS thread pools before numpy loads; everything here is deterministic
# single-stream math, and capped pools keep results bit-stable across hosts.
if "SYMTAIL_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SYMTAIL_THREADS"])

__version__ = "0.1.0"

from .batch import SymbolBatch
from .dist import ScaledTailLaw, TailKind, TailModel

__all__ = [
    "__version__",
    "SymbolBatch",
    "ScaledTailLaw",
    "TailKind",
    "TailModel",
]
