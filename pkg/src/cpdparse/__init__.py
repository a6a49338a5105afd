"""Second-order semantic dependency parsing with mean-field inference over CPD-factored scores."""
from .core import NULL, TOP_LABEL, Hyperparams, LabeledGraph, LabelSet, Posterior, SdpSentence, Token
from .cpd import CpdFactors, DenseFactor, materialize, random_factors
from .errors import (BudgetExceededError, CpdParseError, LabelVocabularyError, SdpFormatError, ShapeError,
                     TrainingDivergenceError)
from .evaluation import F1Report, evaluate
from .mean_field import (ScoreSet, aggregate, decode, energy, energy_gradient, factored_update, infer,
                         naive_update)
from .model import Parser
from .sdp_io import SdpDocument, read_sdp, read_sdp_file, write_sdp, write_sdp_file
from .training import train

__version__ = "0.1.0"

__all__ = [
    "NULL", "TOP_LABEL", "Hyperparams", "LabeledGraph", "LabelSet", "Posterior", "SdpSentence", "Token",
    "CpdFactors", "DenseFactor", "materialize", "random_factors",
    "BudgetExceededError", "CpdParseError", "LabelVocabularyError", "SdpFormatError", "ShapeError",
    "TrainingDivergenceError", "F1Report", "evaluate",
    "ScoreSet", "aggregate", "decode", "energy", "energy_gradient", "factored_update", "infer", "naive_update",
    "Parser", "SdpDocument", "read_sdp", "read_sdp_file", "write_sdp", "write_sdp_file", "train",
]
