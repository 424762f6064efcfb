"""
Propagation configuration schema
"""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

PropagationMode = Literal['rep', 'ep']
Normalization = Literal['joint', 'separate']


class PropagationConfig(BaseModel):
    """Update scalar, hop count and context mode of an embedding propagation"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.98, ge=0, lt=1)
    hops: int = Field(default=10, ge=0)
    mode: PropagationMode = 'rep'
    normalization: Normalization = 'joint'
    evaluate_each_hop: bool = False
    threads: int = Field(default=1, ge=1)
