"""
Model specification schema
"""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Family = Literal['transe', 'distmult', 'rotate', 'ote']
FAMILIES = ('transe', 'distmult', 'rotate', 'ote')

# Relation parameter arrays stored per family, in checkpoint order
RELATION_PARAM_NAMES = {
    'transe': ('vectors',),
    'distmult': ('vectors',),
    'rotate': ('phases',),
    'ote': ('matrices', 'scales'),
}


class ModelSpec(BaseModel):
    """Which score/context family is in force and its shape parameters"""
    model_config = ConfigDict(frozen=True)

    family: Family
    entity_dim: int = Field(gt=0)
    margin: float = Field(default=6.0, ge=0)
    norm_order: Literal[1, 2] = 2  # TransE/RotatE/OTE distance norm
    ote_groups: int = Field(default=1, ge=1)

    @model_validator(mode='after')
    def check_shapes(self) -> 'ModelSpec':
        if self.family == 'rotate' and self.entity_dim % 2:
            raise ValueError("RotatE needs an even entity_dim")
        if self.family == 'ote' and self.entity_dim % self.ote_groups:
            raise ValueError("OTE needs entity_dim divisible by ote_groups")
        return self

    @property
    def group_size(self) -> int:
        return self.entity_dim // self.ote_groups

    @property
    def complex_dim(self) -> int:
        return self.entity_dim // 2

    def relation_shapes(self, num_relations: int) -> dict:
        if self.family in ('transe', 'distmult'):
            return {'vectors': (num_relations, self.entity_dim)}
        if self.family == 'rotate':
            return {'phases': (num_relations, self.complex_dim)}
        g = self.group_size
        return {
            'matrices': (num_relations, self.ote_groups, g, g),
            'scales': (num_relations, self.ote_groups, g),
        }
