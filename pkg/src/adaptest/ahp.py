"""Analytic hierarchy process: attribute weights from pairwise comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Saaty's random consistency index by matrix order
RANDOM_INDEX = {1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45, 10: 1.49}
CR_LIMIT = 0.1


class AHPError(ValueError):
    pass


@dataclass(frozen=True)
class PairwiseMatrix:
    criteria: Sequence[str]
    entries: Sequence[Sequence[float]]

    def __post_init__(self) -> None:
        n = len(self.entries)
        if n == 0 or len(self.criteria) != n:
            raise AHPError("need one criterion per row")
        if n not in RANDOM_INDEX:
            raise AHPError(f"matrix order {n} outside 1..{max(RANDOM_INDEX)}")
        for i, row in enumerate(self.entries):
            if len(row) != n:
                raise AHPError("matrix must be square")
            for j, a in enumerate(row):
                if not a > 0:
                    raise AHPError(f"entry ({i},{j}) must be positive")
                if not math.isclose(a * self.entries[j][i], 1.0, rel_tol=1e-9):
                    raise AHPError(f"entries ({i},{j}) and ({j},{i}) are not reciprocal")

    @property
    def n(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class AHPResult:
    criteria: tuple[str, ...]
    weights: tuple[float, ...]
    lambda_max: float
    ci: float
    cr: float

    @property
    def consistent(self) -> bool:
        return self.cr <= CR_LIMIT

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.criteria, self.weights))


def ahp_weights(matrix: PairwiseMatrix) -> AHPResult:
    """Row geometric means, normalized; CR from the mean of (A·w)_i / w_i."""
    a = matrix.entries
    n = matrix.n
    gm = [math.exp(math.fsum(math.log(x) for x in row) / n) for row in a]
    total = math.fsum(gm)
    w = [g / total for g in gm]
    aw = [math.fsum(a[i][j] * w[j] for j in range(n)) for i in range(n)]
    lambda_max = math.fsum(aw[i] / w[i] for i in range(n)) / n
    ci = (lambda_max - n) / (n - 1) if n > 1 else 0.0
    ri = RANDOM_INDEX[n]
    cr = ci / ri if ri > 0 else 0.0
    return AHPResult(tuple(matrix.criteria), tuple(w), lambda_max, ci, cr)
