from .types import (
    LARGE_IMAGE_CUTOFF,
    Content,
    DataError,
    Dataset,
    ExperimentPair,
    GroundTruth,
    Outcome,
    success_rate,
    validate_content,
)
from .manifest import load_dataset, save_dataset
from .split import split_dataset
from .synthetic import (
    DomainSpec,
    MotifSpec,
    SyntheticSpec,
    TokenSpec,
    default_spec,
    domain_only_spec,
    generate_synthetic,
    nonlinear_spec,
    render_cells,
    tiny_spec,
)

__all__ = [
    "LARGE_IMAGE_CUTOFF",
    "Content",
    "DataError",
    "Dataset",
    "DomainSpec",
    "ExperimentPair",
    "GroundTruth",
    "MotifSpec",
    "Outcome",
    "SyntheticSpec",
    "TokenSpec",
    "default_spec",
    "domain_only_spec",
    "generate_synthetic",
    "load_dataset",
    "nonlinear_spec",
    "render_cells",
    "save_dataset",
    "split_dataset",
    "success_rate",
    "tiny_spec",
    "validate_content",
]
