"""
Trojan Hunt Lab - Submission Model
model_id -> Trigger candidato. O mesmo formato guarda o ground truth.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

from .trigger import Trigger


@dataclass(eq=False)
class Submission:
    candidates: Dict[int, Trigger] = field(default_factory=dict)

    @property
    def ids(self) -> List[int]:
        return sorted(self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)

    def __contains__(self, model_id: int) -> bool:
        return model_id in self.candidates

    def __getitem__(self, model_id: int) -> Trigger:
        return self.candidates[model_id]

    def items(self) -> Iterator[Tuple[int, Trigger]]:
        for model_id in self.ids:
            yield model_id, self.candidates[model_id]
