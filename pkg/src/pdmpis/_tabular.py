"""Tabular description of affine one-dimensional models.

Both built-in models reduce to: per (mode, failure-flag) cell an affine
vector field a + b*x, interval domain bounds with optional forced-jump
kernels at each end, and a list of transitions with affine rates and fixed
targets (one position-conditional target variant covers repair rules that
depend on the current position).  The compiled engine consumes exactly this
structure; the generic ModelSpec methods of the built-ins are generated
from it so both engines execute the same model data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_FAILURE = 0
CLASS_REPAIR = 1
CLASS_OTHER = 2


@dataclass
class TabularModel:
    """Flattened mode table; cell index encodes (public mode, md) pairs."""

    n_cells: int
    vf_a: np.ndarray          # float64[n_cells]
    vf_b: np.ndarray          # float64[n_cells]
    lower: np.ndarray         # float64[n_cells], -inf when absent
    upper: np.ndarray         # float64[n_cells], +inf when absent
    lower_kid: np.ndarray     # int32[n_cells], kernel id or -1
    upper_kid: np.ndarray     # int32[n_cells]
    trans_off: np.ndarray     # int32[n_cells]
    trans_n: np.ndarray       # int32[n_cells]
    tr_a: np.ndarray          # float64[n_trans], rate = a + b*x
    tr_b: np.ndarray          # float64[n_trans]
    tr_target: np.ndarray     # int32[n_trans], cell index
    tr_class: np.ndarray      # int32[n_trans], CLASS_*
    tr_cond: np.ndarray       # int8[n_trans], 1: use tr_target_lo when x <= cond_x
    tr_target_lo: np.ndarray  # int32[n_trans]
    cond_x: float
    kern_off: np.ndarray      # int32[n_kernels]
    kern_n: np.ndarray        # int32[n_kernels]
    kern_prob: np.ndarray     # float64[n_atoms]
    kern_target: np.ndarray   # int32[n_atoms]
    kern_x: np.ndarray        # float64[n_kernels], arrival position (= boundary)
    cell0: int
    x0: float

    def validate(self):
        for kid in range(len(self.kern_off)):
            o, n = self.kern_off[kid], self.kern_n[kid]
            mass = float(np.sum(self.kern_prob[o:o + n]))
            if abs(mass - 1.0) > 1e-12:
                raise ValueError(f"kernel {kid} mass {mass} != 1")
        if np.any(self.trans_n < 0):
            raise ValueError("negative transition count")
        return self
