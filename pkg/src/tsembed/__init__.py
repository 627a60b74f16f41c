"""Topic-sensitive word embeddings.

A pipeline that learns a nonparametric topic model over a corpus, labels
tokens (or documents) with topics, trains skipgram variants whose target
representations depend on those topics, and evaluates the result on
similarity-in-context and lexical substitution benchmarks.
"""

__version__ = "0.1.0"

from .corpus import (Corpus, Document, NegativeTable, Vocabulary, build_vocab,
                     corpus_from_lines, keep_probability, load_corpus,
                     negative_table, tokenize)
from .embeddings import (EmbeddingModel, TrainConfig, VARIANTS, embed_target,
                         load_model, nearest_neighbors, sgns_gradients,
                         sgns_step, train)
from .evaluation import (LexsubInstance, LexsubResult, MannWhitneyResult,
                         ScwsInstance, ScwsResult, eval_lexsub, eval_scws,
                         gap, load_lexsub, load_scws, mann_whitney,
                         significance_marker, spearman)
from .hdp import (HdpConfig, TopicModel, corpus_log_likelihood,
                  infer_doc_topics, label_corpus, label_tokens, train_hdp)
from .inference import (PairScore, ScoredContext, cosine, sim_pair, sim_sge_c,
                        sim_tse_expected, sim_tse_sampled)

__all__ = [
    "__version__",
    "Corpus", "Document", "NegativeTable", "Vocabulary", "build_vocab",
    "corpus_from_lines", "keep_probability", "load_corpus", "negative_table",
    "tokenize",
    "EmbeddingModel", "TrainConfig", "VARIANTS", "embed_target", "load_model",
    "nearest_neighbors", "sgns_gradients", "sgns_step", "train",
    "LexsubInstance", "LexsubResult", "MannWhitneyResult", "ScwsInstance",
    "ScwsResult", "eval_lexsub", "eval_scws", "gap", "load_lexsub",
    "load_scws", "mann_whitney", "significance_marker", "spearman",
    "HdpConfig", "TopicModel", "corpus_log_likelihood", "infer_doc_topics",
    "label_corpus", "label_tokens", "train_hdp",
    "PairScore", "ScoredContext", "cosine", "sim_pair", "sim_sge_c",
    "sim_tse_expected", "sim_tse_sampled",
]
