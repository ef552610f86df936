"""Randomized truncated SVD of sparse matrices with dynamically shifted power iteration."""

__version__ = "0.1.0"

from .analysis import (
    BoundParams,
    FlopConstants,
    ReferenceSpectrum,
    eps_pve,
    eps_res,
    eps_sigma,
    eps_spec,
    flop_estimate,
    lemma6_bound,
    spectral_norm_estimate,
    theorem1_bound,
)
from .dense import EigenPair, TruncatedSvd, eig_svd, gaussian_matrix, oracle_svd, qr_orth, sym_eig
from .errors import (
    ConfigError,
    DashSvdError,
    DegenerateReference,
    HypothesisError,
    NumericalError,
    ParseError,
    RankDeficient,
    ShapeError,
    UnsupportedFormat,
)
from .rsvd import (
    IterationState,
    ShiftTrace,
    SolverConfig,
    basic_rsvd,
    dash_svd,
    pve_stop_check,
    shifted_power_iteration,
    shifted_rsvd,
    solve,
    update_shift,
)
from .sparse import SparseMatrix, load_matrix_market, spmm, transpose, write_matrix_market
