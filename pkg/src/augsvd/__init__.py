"""Block-column SVD updating for tall-thin matrices with implicit left factor."""
from .errors import (
    AugSVDError,
    CapacityError,
    ConvergenceError,
    DimensionError,
    NonFiniteError,
    SamplerError,
    StabilizationError,
    StateFormatError,
    VersionError,
)
from .kernels import (
    PivotedQR,
    Reflector,
    SmallSVD,
    apply_reflectors,
    make_reflector,
    pivoted_qr,
    small_svd,
)
from .state import (
    FactoredSVD,
    HouseholderStack,
    ThresholdPolicy,
    apply_U_block,
    apply_Ut_block,
    deserialize,
    init_from_column,
    kernel_basis,
    left_singular_vector,
    left_singular_vectors,
    low_rank_matrix,
    rank,
    serialize,
    singular_values,
)
from .thresholding import (
    CutDecision,
    bound_sigma_head,
    bound_sigma_tail,
    check_rank_robustness,
    choose_cut,
    thresholded_svd,
)
from .update import ColumnBlock, UpdateReport, augment, augment_many
from ._threads import deterministic, thread_limit
from . import bench, prony, video

__version__ = "0.1.0"
