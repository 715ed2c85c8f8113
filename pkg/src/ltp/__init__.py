"""Learning topic-level personalization from pairs of vanilla and personalized ranked lists."""

from .em import run_ltp_em
from .errors import DuplicateItemError, SchemaError, TopicCountMismatch
from .inference import VariationalState, run_ltp_inf
from .perm_models import ModelParams, f_log_prob, g_log_prob, sample_f, sample_g
from .rankings import Permutation, QueryObservation, align_lists, read_observations
from .simulator import simulate
from .topic_model import fit_topics, import_topic_maps

__all__ = [
    "DuplicateItemError", "ModelParams", "Permutation", "QueryObservation", "SchemaError",
    "TopicCountMismatch", "VariationalState", "align_lists", "f_log_prob", "fit_topics", "g_log_prob",
    "import_topic_maps", "read_observations", "run_ltp_em", "run_ltp_inf", "sample_f", "sample_g", "simulate",
]
