"""Kernel backend selection.

The hot inner loops (attention, row softmax, row layer-norm, token
matching) exist twice: a compiled Cython extension (`_ckernels`) and a
pure numpy fallback (`pykernels`). One of them is picked at import time:

  SPEECHALIGN_KERNELS=c     require the compiled backend (ImportError if absent)
  SPEECHALIGN_KERNELS=py    force the numpy fallback
  unset / auto              compiled if built, numpy otherwise

Both backends implement the same math; `benchmarks/bench_kernels.py`
compares their speed.
"""

import os

_choice = os.environ.get("SPEECHALIGN_KERNELS", "auto")

if _choice == "py":
    from speechalign.backend import pykernels as kernels
elif _choice == "c":
    from speechalign.backend import _ckernels as kernels  # type: ignore[no-redef]
elif _choice == "auto":
    try:
        from speechalign.backend import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from speechalign.backend import pykernels as kernels
else:
    raise ValueError(f"SPEECHALIGN_KERNELS must be 'c', 'py' or 'auto', got {_choice!r}")

BACKEND_NAME: str = kernels.NAME

softmax_rows_fwd = kernels.softmax_rows_fwd
softmax_rows_bwd = kernels.softmax_rows_bwd
layernorm_rows_fwd = kernels.layernorm_rows_fwd
layernorm_rows_bwd = kernels.layernorm_rows_bwd
attention_fwd = kernels.attention_fwd
attention_bwd = kernels.attention_bwd
token_match_fwd = kernels.token_match_fwd
token_match_bwd = kernels.token_match_bwd
