from __future__ import annotations

import json
from typing import Any

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def canonical_json(value: Any) -> str:
    """Compact, key-sorted, non-ASCII-preserving JSON; the input to every stable hash."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def detail_hash(value: Any) -> str:
    return format(fnv1a_64(canonical_json(value).encode("utf-8")), "016x")
