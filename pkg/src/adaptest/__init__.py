"""Adaptive GUI test automation against a simulated application."""

from .ahp import AHPResult, PairwiseMatrix, ahp_weights
from .config import EngineConfig, load_config
from .dsl import Step, TestScript, ValidationIssue, parse, serialize, validate
from .engine import RunReport, execute_script, execute_suite, exit_code, load_report, render_report
from .maintainer import ScriptPatch, apply_patches, diff_models, propose_patches
from .matching import MatchResult, SimilarityConfig, fuzzy_match, levenshtein, string_similarity
from .model import AppModel, MutationOp, apply_mutation, load_model, start_session
from .recovery import KnowledgeBase, RecoveryEvent, attempt_recovery, load_kb
from .repo import ObjectDescriptor, Repository, load_repository, resolve_exact
from .review import record_decision, review
from .testgen import crawl_generate, load_log, mine_logs

__all__ = [
    "AHPResult", "AppModel", "EngineConfig", "KnowledgeBase", "MatchResult", "MutationOp",
    "ObjectDescriptor", "PairwiseMatrix", "RecoveryEvent", "Repository", "RunReport",
    "ScriptPatch", "SimilarityConfig", "Step", "TestScript", "ValidationIssue",
    "ahp_weights", "apply_mutation", "apply_patches", "attempt_recovery", "crawl_generate",
    "diff_models", "execute_script", "execute_suite", "exit_code", "fuzzy_match", "levenshtein",
    "load_config", "load_kb", "load_log", "load_model", "load_report", "load_repository",
    "mine_logs", "parse", "propose_patches", "record_decision", "render_report", "resolve_exact",
    "review", "serialize", "start_session", "string_similarity", "validate",
]
