"""Case-level train/val/test splits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInputError, InputError


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int = 0
    ratio: tuple[int, int, int] = (8, 1, 1)

    def __post_init__(self):
        self.ratio = tuple(self.ratio)
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise InputError("a case appears in more than one split")

    def __getitem__(self, name) -> list[str]:
        if name not in ("train", "val", "test"):
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def all(self) -> list[str]:
        return self.train + self.val + self.test

    def to_json(self) -> dict:
        return dict(train=self.train, val=self.val, test=self.test, seed=self.seed, ratio=list(self.ratio))

    @classmethod
    def from_json(cls, d) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), int(d["seed"]), tuple(d["ratio"]))

    @staticmethod
    def union(parts, seed=0) -> "DatasetSplit":
        parts = list(parts)
        return DatasetSplit(sum((p.train for p in parts), []), sum((p.val for p in parts), []),
                            sum((p.test for p in parts), []), seed, parts[0].ratio if parts else (8, 1, 1))


def split_cases(case_ids, ratio=(8, 1, 1), seed: int = 0) -> DatasetSplit:
    """Seeded shuffle; val and test get floor shares, the remainder goes to train."""
    ids = list(case_ids)
    if not ids:
        raise EmptyInputError("no cases to split")
    if len(set(ids)) != len(ids):
        raise InputError("duplicate case ids")
    if len(ratio) != 3 or min(ratio) < 0 or sum(ratio) <= 0:
        raise InputError(f"ratio must be three non-negative weights, got {ratio}")
    total = sum(ratio)
    n = len(ids)
    n_val = n * ratio[1] // total
    n_test = n * ratio[2] // total
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    test = shuffled[:n_test]
    val = shuffled[n_test:n_test + n_val]
    train = shuffled[n_test + n_val:]
    return DatasetSplit(train, val, test, seed, tuple(ratio))


def split_by_group(groups: dict, ratio=(8, 1, 1), seed: int = 0) -> DatasetSplit:
    """Split each group (e.g. subset) on its own, then merge, so every group keeps the ratio."""
    return DatasetSplit.union([split_cases(ids, ratio, seed) for _, ids in sorted(groups.items())], seed)
