"""
Search budget and the search-cost estimate.
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator


class SearchBudget(BaseModel):
    """
    Round and epoch caps of both phases.

    phase1_rounds and phase2_rounds are the round caps (I_max) of each phase;
    layers_per_round is how many moves one refinement round makes.
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    phase1_rounds: int = Field(default=3, ge=0)
    phase1_epochs: int = Field(default=4, ge=0)
    phase2_rounds: int = Field(default=40, ge=0)
    phase2_epochs: int = Field(default=4, ge=0)
    layers_per_round: int = Field(default=2, ge=0)
    clusters: int = Field(default=4, ge=1, le=4)
    patience: int = Field(default=3, ge=1)
    lambda_start: float = Field(default=0.1, ge=0)
    lambda_step: float = Field(default=0.1, ge=0)
    restarts: int = Field(default=8, ge=0)

    @model_validator(mode='after')
    def _moves_when_refining(self):
        if self.phase2_rounds > 0 and self.layers_per_round < 1:
            raise ValueError("layers_per_round must be >= 1 when phase2_rounds > 0")
        return self

    def lambda_at(self, round_index: int) -> float:
        """λ of the `round_index`-th clustering round (0-based)."""
        return round(self.lambda_start + round_index * self.lambda_step, 10)


def estimate_search_cost(budget: SearchBudget, epoch_seconds: float) -> float:
    """(M * E_P1 + N * E_P2) * T_epoch in seconds."""
    if epoch_seconds < 0:
        raise ValueError("epoch time must be non-negative")
    epochs = budget.phase1_rounds * budget.phase1_epochs + budget.phase2_rounds * budget.phase2_epochs
    return epochs * epoch_seconds
