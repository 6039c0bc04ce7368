from .metrics import ConstantInputError, EvalError, pairwise_accuracy, pearson, trust_score
from .harness import DiffResult, EvalReport, eval_generic, eval_image, eval_text, pairs_differing
from .attributors import (
    LinearBagModel,
    ModelAttributor,
    model_feature_extractor,
    oracle_attributor,
    random_attributor,
)

__all__ = [
    "ConstantInputError",
    "DiffResult",
    "EvalError",
    "EvalReport",
    "LinearBagModel",
    "ModelAttributor",
    "eval_generic",
    "eval_image",
    "eval_text",
    "model_feature_extractor",
    "oracle_attributor",
    "pairs_differing",
    "pairwise_accuracy",
    "pearson",
    "random_attributor",
    "trust_score",
]
