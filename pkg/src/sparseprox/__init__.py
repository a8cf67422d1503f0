"""Proximal training of sparse neural networks with the transformed-l1
penalty and its integrated group-sparsity variant."""
from ._kernels import BACKEND
from .errors import (
    ConfigError,
    DataFormatError,
    ProxDomainError,
    ShapeError,
    SparseProxError,
    TrainingDivergence,
)
from .penalties import PenaltyKind, PenaltySpec, penalty_value, penalty_value_vector
from .prox import GroupPartition, ProxStep, group_prox, integrated_prox, tl1_prox_matrix, tl1_prox_scalar, tl1_threshold
from .trainer import RegularizerMode, TrainConfig, train

__version__ = "0.1.0"
