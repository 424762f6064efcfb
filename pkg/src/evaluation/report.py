"""
Ranking report schema
"""
from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

HITS_AT = (1, 3, 10)
CSV_FIELDS = ('mrr', 'hits1', 'hits3', 'hits10', 'num_queries')


class DirectionReport(BaseModel):
    """MRR and Hits@{1,3,10} over one set of ranks"""
    model_config = ConfigDict(extra='forbid')

    mrr: float = Field(default=0.0, ge=0, le=1)
    hits1: float = Field(default=0.0, ge=0, le=1)
    hits3: float = Field(default=0.0, ge=0, le=1)
    hits10: float = Field(default=0.0, ge=0, le=1)
    num_queries: int = Field(default=0, ge=0)

    @model_validator(mode='after')
    def check_invariants(self):
        if self.num_queries == 0:
            return self
        if not 0 < self.mrr <= 1:
            raise ValueError(f"MRR {self.mrr} outside (0, 1]")
        if not 0 <= self.hits1 <= self.hits3 <= self.hits10 <= 1:
            raise ValueError("Hits@K must be non-decreasing in K and lie in [0, 1]")
        if self.mrr < self.hits1:
            raise ValueError("MRR cannot be below Hits@1")
        return self

    @classmethod
    def from_ranks(cls, ranks: Sequence[float]) -> 'DirectionReport':
        ranks = np.asarray(ranks, dtype=np.float64)
        if len(ranks) == 0:
            return cls()
        hits = {f"hits{k}": float(np.mean(ranks <= k)) for k in HITS_AT}
        return cls(mrr=float(np.mean(1.0 / ranks)), num_queries=len(ranks), **hits)


class RankingReport(DirectionReport):
    """Overall metrics with the head-prediction and tail-prediction breakdown

    head is None when only tail queries were asked (candidate-list protocol).
    """
    head: Optional[DirectionReport] = None
    tail: Optional[DirectionReport] = None

    @classmethod
    def from_direction_ranks(cls, head_ranks: Optional[Sequence[float]],
                             tail_ranks: Sequence[float]) -> 'RankingReport':
        parts = [np.asarray(tail_ranks, dtype=np.float64)]
        if head_ranks is not None:
            parts.insert(0, np.asarray(head_ranks, dtype=np.float64))
        overall = DirectionReport.from_ranks(np.concatenate(parts))
        return cls(
            **overall.model_dump(),
            head=DirectionReport.from_ranks(head_ranks) if head_ranks is not None else None,
            tail=DirectionReport.from_ranks(tail_ranks),
        )

    def to_json_dict(self) -> Dict:
        return self.model_dump(exclude_none=True)

    def csv_row(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in CSV_FIELDS}


def report_json_schema() -> Dict:
    """JSON Schema that every report written by evaluate validates against"""
    return RankingReport.model_json_schema()
