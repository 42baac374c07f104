"""Fuzzy object matching: attribute similarities aggregated by weighted sum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from rapidfuzz.distance import Levenshtein

from .model import ObjectView
from .repo import ObjectDescriptor

DEFAULT_WEIGHTS = {
    "name": 0.35,
    "obj_type": 0.20,
    "parent_name": 0.15,
    "text": 0.15,
    "position": 0.10,
    "size": 0.05,
}
DEFAULT_THRESHOLD = 0.65
_SCORE_DIGITS = 12  # rounding keeps rankings stable under weight rescaling


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    return Levenshtein.distance(a, b)


def string_similarity(a: str, b: str, case_insensitive: bool = True) -> float:
    if case_insensitive:
        a, b = a.lower(), b.lower()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def numeric_similarity(
    u: Sequence[float], v: Sequence[float], metric: str = "euclidean", scale: Sequence[float] | None = None
) -> float:
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    scale = scale if scale is not None else [1.0] * len(u)
    if len(scale) != len(u) or any(s <= 0 for s in scale):
        raise ValueError("scale must be positive and match the vector dimension")
    a = [x / s for x, s in zip(u, scale)]
    b = [y / s for y, s in zip(v, scale)]
    if metric == "euclidean":
        return 1.0 - min(1.0, math.dist(a, b))
    if metric == "cosine":
        na, nb = math.hypot(*a), math.hypot(*b)
        if na == 0 and nb == 0:
            return 1.0
        if na == 0 or nb == 0:
            return 0.0
        cos = math.fsum(x * y for x, y in zip(a, b)) / (na * nb)
        return max(0.0, min(1.0, cos))
    raise ValueError(f"unknown metric {metric!r}")


def default_type_compatibility() -> dict[tuple[str, str], float]:
    pairs = {("listbox", "combobox"): 0.5, ("textfield", "password_field"): 0.5}
    table: dict[tuple[str, str], float] = {}
    for (x, y), score in pairs.items():
        table[(x, y)] = table[(y, x)] = score
    return table


@dataclass
class SimilarityConfig:
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    threshold: float = DEFAULT_THRESHOLD
    numeric_metric: str = "euclidean"
    case_insensitive: bool = True
    # off-diagonal entries only; same type is always 1.0 and missing pairs are 0
    type_compatibility: dict[tuple[str, str], float] = field(default_factory=default_type_compatibility)

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if any(w < 0 for w in self.weights.values()) or not any(w > 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative with at least one positive")
        if self.numeric_metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {self.numeric_metric!r}")
        for (x, y), score in self.type_compatibility.items():
            if self.type_compatibility.get((y, x), score) != score:
                raise ValueError(f"type compatibility not symmetric for {x}/{y}")
            if x == y and score != 1.0:
                raise ValueError("type compatibility diagonal must be 1")

    def type_score(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.type_compatibility.get((a, b), 0.0)

    def to_dict(self) -> dict[str, Any]:
        seen = set()
        compat = []
        for (x, y), score in sorted(self.type_compatibility.items()):
            if (y, x) not in seen:
                seen.add((x, y))
                compat.append([x, y, score])
        return {
            "weights": dict(self.weights),
            "threshold": self.threshold,
            "numeric_metric": self.numeric_metric,
            "case_insensitive": self.case_insensitive,
            "type_compatibility": compat,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimilarityConfig":
        """Build from a config record; ``ahp_matrix`` (n×n, optional ``ahp_criteria``)
        replaces explicit weights."""
        kwargs: dict[str, Any] = {}
        if "ahp_matrix" in data:
            if "weights" in data:
                raise ValueError("ahp_matrix and weights are mutually exclusive")
            from .ahp import PairwiseMatrix, ahp_weights

            matrix = data["ahp_matrix"]
            criteria = data.get("ahp_criteria") or list(DEFAULT_WEIGHTS)[: len(matrix)]
            kwargs["weights"] = ahp_weights(PairwiseMatrix(criteria, matrix)).as_dict()
        elif "weights" in data:
            kwargs["weights"] = {k: float(v) for k, v in data["weights"].items()}
        for key in ("threshold", "numeric_metric", "case_insensitive"):
            if key in data:
                kwargs[key] = data[key]
        if "type_compatibility" in data:
            table: dict[tuple[str, str], float] = {}
            for x, y, score in data["type_compatibility"]:
                table[(x, y)] = table[(y, x)] = float(score)
            kwargs["type_compatibility"] = table
        return cls(**kwargs)


@dataclass(frozen=True)
class MatchResult:
    candidate: str
    overall: float
    per_attribute: Mapping[str, float]
    rank: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate": self.candidate,
            "overall": self.overall,
            "per_attribute": dict(self.per_attribute),
            "rank": self.rank,
        }


def effective_weights(descriptor: ObjectDescriptor, config: SimilarityConfig) -> dict[str, float]:
    """Weights restricted to the attributes the descriptor specifies."""
    override = descriptor.weights or {}
    return {k: float(override.get(k, config.weights.get(k, 0.0))) for k in descriptor.attributes}


def attribute_scores(
    descriptor: ObjectDescriptor,
    candidate: ObjectView,
    config: SimilarityConfig,
    dimensions: Sequence[int] | None = None,
) -> dict[str, float]:
    scores: dict[str, float] = {}
    ci = config.case_insensitive
    for key, expected in descriptor.attributes.items():
        if key in ("name", "text", "parent_name"):
            scores[key] = string_similarity(str(expected), getattr(candidate, key) or "", ci)
        elif key == "obj_type":
            scores[key] = config.type_score(str(expected), candidate.obj_type)
        elif key == "position":
            if dimensions is None:
                raise ValueError("position similarity needs screen dimensions")
            scores[key] = numeric_similarity(expected, candidate.position, config.numeric_metric, dimensions)
        elif key == "size":
            scale = [max(1, x) for x in expected]
            scores[key] = numeric_similarity(expected, candidate.size, config.numeric_metric, scale)
    return scores


def object_similarity(
    descriptor: ObjectDescriptor,
    candidate: ObjectView,
    config: SimilarityConfig | None = None,
    dimensions: Sequence[int] | None = None,
) -> MatchResult:
    """Weighted mean of per-attribute similarities over the descriptor's attributes."""
    config = config or SimilarityConfig()
    scores = attribute_scores(descriptor, candidate, config, dimensions)
    return MatchResult(candidate.id, weighted_overall(scores, effective_weights(descriptor, config)), scores)


def weighted_overall(scores: Mapping[str, float], weights: Mapping[str, float]) -> float:
    total = math.fsum(weights[k] for k in scores)
    if total <= 0:
        return 0.0
    return round(math.fsum(weights[k] * scores[k] for k in scores) / total, _SCORE_DIGITS)


def rank_key(result: MatchResult) -> tuple[float, float, str]:
    return (-result.overall, -result.per_attribute.get("name", 0.0), result.candidate)


def fuzzy_match(
    descriptor: ObjectDescriptor,
    candidates: Sequence[ObjectView],
    config: SimilarityConfig | None = None,
    dimensions: Sequence[int] | None = None,
) -> tuple[MatchResult | None, list[MatchResult]]:
    """Closest candidate at or above the threshold, plus the full ranking."""
    config = config or SimilarityConfig()
    results = sorted(
        (object_similarity(descriptor, c, config, dimensions) for c in candidates), key=rank_key
    )
    ranking = [
        MatchResult(r.candidate, r.overall, r.per_attribute, rank) for rank, r in enumerate(results, start=1)
    ]
    best = ranking[0] if ranking and ranking[0].overall >= config.threshold else None
    return best, ranking
