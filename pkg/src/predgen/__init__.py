"""predgen: a desk-scale lab for prediction through token generation.

Tiny autoregressive transformers trained three ways (pooled predictor,
plain generator, generation with scheduled sampling + a task adapter),
the writer-director loss family, and a MINE-based mutual-information
pipeline for comparing pooled against full-sequence representations.
"""

import os

# Matrices here are tiny (d <= 128); BLAS thread fan-out costs more than it
# saves.  setdefault so explicit user settings always win.
_threads = os.environ.get("PREDGEN_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

from .autodiff import Tensor, no_grad  # noqa: E402
from .linalg import finite_diff_grad, truncated_svd  # noqa: E402
from .model import ModelConfig, forward, generate, pool  # noqa: E402
from .sampling import SamplingSchedule, mix_sequence, mix_token, mixing_prob  # noqa: E402
from .losses import (  # noqa: E402
    adaptive,
    multiplicative,
    ordered_ce,
    wdal,
    wdal_grad,
    writer_ce,
)
from .adapters import adapt_classify, decode_number, encode_number  # noqa: E402
from .mi import dpi_compare, mine_estimate, reduce_states, token_mi_matrix  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "finite_diff_grad",
    "truncated_svd",
    "ModelConfig",
    "forward",
    "generate",
    "pool",
    "SamplingSchedule",
    "mixing_prob",
    "mix_sequence",
    "mix_token",
    "writer_ce",
    "wdal",
    "wdal_grad",
    "multiplicative",
    "adaptive",
    "ordered_ce",
    "adapt_classify",
    "decode_number",
    "encode_number",
    "reduce_states",
    "mine_estimate",
    "dpi_compare",
    "token_mi_matrix",
    "__version__",
]
