"""
Person-level train/validation/test planning: 10 % test, the rest in nine
cross-validation folds (8 folds train, 1 fold validation).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

N_FOLDS = 9
TEST_FRACTION = 0.10
MIN_PERSONS = 20


class TooFewPersonsError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    """
    :param test_ids: persons held out for testing
    :param fold_assignments: person id -> fold index 0..8
    :param seed: seed the plan was drawn with
    """

    test_ids: Tuple[str, ...]
    fold_assignments: Dict[str, int]
    seed: int

    def fold_ids(self, fold: int) -> List[str]:
        _check_fold(fold)
        return [pid for pid, f in self.fold_assignments.items() if f == fold]

    def validation_ids(self, fold: int) -> List[str]:
        return self.fold_ids(fold)

    def train_ids(self, fold: int) -> List[str]:
        _check_fold(fold)
        return [pid for pid, f in self.fold_assignments.items() if f != fold]

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "test_ids": list(self.test_ids),
            "fold_assignments": dict(self.fold_assignments),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        return cls(
            test_ids=tuple(data["test_ids"]),
            fold_assignments={str(k): int(v) for k, v in data["fold_assignments"].items()},
            seed=int(data["seed"]),
        )


def _check_fold(fold: int) -> None:
    if not 0 <= int(fold) < N_FOLDS:
        raise ValueError(f"fold must be in 0..{N_FOLDS - 1}, got {fold}")


def build_split(person_ids: Sequence[str], seed: int) -> SplitPlan:
    """
    Draw a deterministic person-level split.

    :param person_ids: unique person identifiers (duplicates are collapsed)
    :param seed: 64-bit seed
    :return: SplitPlan with round(10 %) test persons and nine folds whose
        sizes differ by at most one
    """
    unique = sorted(set(str(p) for p in person_ids))
    if len(unique) < MIN_PERSONS:
        raise TooFewPersonsError(
            f"need at least {MIN_PERSONS} persons to split, got {len(unique)}"
        )
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    order = rng.permutation(len(unique))
    shuffled = [unique[i] for i in order]

    n_test = int(round(len(unique) * TEST_FRACTION))
    test_ids = tuple(shuffled[:n_test])
    remaining = shuffled[n_test:]
    folds = {pid: i % N_FOLDS for i, pid in enumerate(remaining)}
    logger.debug(
        "split %d persons: %d test, %d in %d folds", len(unique), n_test, len(remaining), N_FOLDS
    )
    return SplitPlan(test_ids=test_ids, fold_assignments=folds, seed=int(seed))
