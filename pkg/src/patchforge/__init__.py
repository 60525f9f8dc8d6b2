"""Learn statement-level code fixes from before/after file pairs.

The pipeline mines statement diffs via two-phase tree matching, slices
def-use context chains, normalizes them into placeholder form, trains an
encoder-decoder transformer (pre-train then fine-tune), beam-decodes
candidate fixes, refills the abstraction, checks syntax, and emits
patches, with an evaluation harness for exact-match, top-k, k-fold, and
time-split protocols.
"""

from .abstraction import (
    AbstractionDictionary, MergeTable, TokenSeq, Vocabulary, abstract_pair,
    abstract_text, bpe_segment, bpe_train, build_vocab, tokenize,
)
from .ast_core import (
    AstNode, SourceUnit, ast_io, decode_tree, encode_tree, parse_source,
    structurally_equal,
)
from .beam import BeamHypothesis, beam_search, greedy_decode
from .config import PipelineConfig, load_config, parse_config
from .corpus import CorpusRecord, GeneratorSpec, load_corpus, save_corpus, synth_corpus
from .evaluator import (
    EvalReport, KFold, TimeSplit, exact_match, group_report, record_level,
    split_corpus, topk_match,
)
from .model import (
    ModelConfig, TransformerParams, attention, forward, grad_check,
    init_params, load_params, save_params,
)
from .patcher import (
    ExternalCommandChecker, PatchCandidate, SubsetGrammarChecker,
    check_candidates, emit_patch, refill,
)
from .pipeline import run_pipeline
from .slicer import ChangePair, DefUseChain, assemble_change_pair, build_defuse_chain
from .training import (
    Checkpoint, TrainPlan, best_checkpoint, finetune_model, train_model,
)
from .tree_diff import (
    EditAction, MappingSet, StatementDiff, apply_edit_script, edit_script,
    extract_change_pairs, match_trees,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
