"""Engine configuration shared by the runner, recovery pipeline and CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .matching import SimilarityConfig
from .testgen import BUILTIN_HEURISTICS, ValueHeuristic

STRATEGIES = (
    "popup_resolution",
    "fill_required_field",
    "fuzzy_rebind",
    "refresh_retry",
    "relogin",
    "adjacent_exploration",
    "custom",
)
POPUP_LEXICON = ("OK", "Close", "Dismiss", "Accept", "Cancel", "No thanks")
NAV_LEXICON = ("Next", ">", "Continue", "Previous", "<", "Back")
LEGACY_MODES = ("abort", "continue")


@dataclass
class EngineConfig:
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    strategy_order: tuple[str, ...] = STRATEGIES
    credentials: dict[str, str] = field(default_factory=lambda: {"username": "", "password": ""})
    popup_lexicon: tuple[str, ...] = POPUP_LEXICON
    nav_lexicon: tuple[str, ...] = NAV_LEXICON
    popup_match_threshold: float = 0.8
    learned_popup_confidence: float = 0.5
    max_refresh_attempts: int = 3
    max_explore_depth: int = 2
    max_passes: int = 3
    adaptive: bool = True
    legacy_mode: str = "abort"
    heuristics: tuple[ValueHeuristic, ...] = BUILTIN_HEURISTICS

    def __post_init__(self) -> None:
        unknown = set(self.strategy_order) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")
        if self.legacy_mode not in LEGACY_MODES:
            raise ValueError(f"legacy_mode must be one of {LEGACY_MODES}")
        if min(self.max_refresh_attempts, self.max_explore_depth, self.max_passes) < 1:
            raise ValueError("limits must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "similarity": self.similarity.to_dict(),
            "strategy_order": list(self.strategy_order),
            "credentials": {"username": self.credentials.get("username", ""), "password": "***"},
            "popup_lexicon": list(self.popup_lexicon),
            "nav_lexicon": list(self.nav_lexicon),
            "popup_match_threshold": self.popup_match_threshold,
            "learned_popup_confidence": self.learned_popup_confidence,
            "limits": {
                "max_refresh_attempts": self.max_refresh_attempts,
                "max_explore_depth": self.max_explore_depth,
                "max_passes": self.max_passes,
            },
            "adaptive": self.adaptive,
            "legacy_mode": self.legacy_mode,
            "heuristics": [h.to_dict() for h in self.heuristics],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        kwargs: dict[str, Any] = {}
        if "similarity" in data:
            kwargs["similarity"] = SimilarityConfig.from_dict(data["similarity"])
        for key in ("strategy_order", "popup_lexicon", "nav_lexicon"):
            if key in data:
                kwargs[key] = tuple(data[key])
        if "credentials" in data:
            kwargs["credentials"] = dict(data["credentials"])
        for key in ("popup_match_threshold", "learned_popup_confidence", "adaptive", "legacy_mode"):
            if key in data:
                kwargs[key] = data[key]
        kwargs.update(data.get("limits", {}))
        if "heuristics" in data:
            kwargs["heuristics"] = tuple(ValueHeuristic(**h) for h in data["heuristics"])
        return cls(**kwargs)


def load_config(document: str) -> EngineConfig:
    return EngineConfig.from_dict(json.loads(document))
