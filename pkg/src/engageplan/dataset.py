"""Stacked feature arrays for a cohort, built from histories and profiles."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import calllog as cl
from .datafiles import load_container, save_container
from .seeding import substream

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    static: np.ndarray  # (n, n_static)
    dynamic: np.ndarray  # (n, T_max, n_channels)
    valid_len: np.ndarray  # (n,)
    scalar: np.ndarray  # (n, 6)
    y: np.ndarray  # (n,) 1 = high risk / LLTE
    ids: list[str] = field(default_factory=list)
    task: str = "short"

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.static[idx], self.dynamic[idx], self.valid_len[idx], self.scalar[idx], self.y[idx],
            [self.ids[i] for i in idx], self.task,
        )

    def flat(self) -> np.ndarray:
        """Tabular view for tree models: static, scalar call features, flattened sequence."""
        return np.hstack([self.static, self.scalar, self.dynamic.reshape(len(self), -1)])

    def nn_static(self) -> np.ndarray:
        """Static input of the neural model: profile encoding plus scalar call features."""
        return np.hstack([self.static, self.scalar])

    def save(self, path, prov: dict | None = None) -> None:
        arrays = {"static": self.static, "dynamic": self.dynamic, "valid_len": self.valid_len,
                  "scalar": self.scalar, "y": self.y}
        save_container(path, "dataset", {"ids": self.ids, "task": self.task}, arrays, prov)

    @classmethod
    def load(cls, path) -> "Dataset":
        meta, arr = load_container(path, "dataset")
        return cls(arr["static"], arr["dynamic"], arr["valid_len"], arr["scalar"], arr["y"],
                   list(meta["ids"]), meta["task"])


def from_examples(examples: list[tuple[cl.SequenceFeatures, cl.EngagementLabel]], task: str) -> Dataset:
    n_static = len(cl.STATIC_FEATURE_NAMES)
    if not examples:
        return Dataset(np.zeros((0, n_static)), np.zeros((0, cl.T_MAX, len(cl.DYNAMIC_CHANNELS))),
                       np.zeros(0, dtype=np.int64), np.zeros((0, 6)), np.zeros(0, dtype=np.int64), [], task)
    return Dataset(
        static=np.stack([f.static for f, _ in examples]),
        dynamic=np.stack([f.dynamic for f, _ in examples]),
        valid_len=np.array([f.valid_len for f, _ in examples], dtype=np.int64),
        scalar=np.stack([f.scalar_calls for f, _ in examples]),
        y=np.array([int(lab.is_positive) for _, lab in examples], dtype=np.int64),
        ids=[f.beneficiary_id for f, _ in examples],
        task=task,
    )


def build_dataset(
    histories: Mapping[str, cl.CallHistory],
    profiles: Mapping[str, cl.BeneficiaryProfile],
    task: str = "short",
    seed: int = 0,
    epoch: int = 0,
    anchor: str = "random",
    threshold: float = cl.E2C_THRESHOLD,
) -> Dataset:
    """One example per beneficiary with a valid profile.

    Short-term anchors are drawn uniformly over week-aligned positions (one
    seeded draw per beneficiary and epoch) unless ``anchor == "first"``.
    Beneficiaries that cannot produce an example are skipped.
    """
    examples = []
    skipped = 0
    for bid in sorted(histories):
        prof = profiles.get(bid)
        h = histories[bid]
        try:
            if task == "short":
                if prof is None:
                    raise cl.Excluded(bid)
                start = prof.registration_date
                if anchor == "first":
                    a = start
                else:
                    a = cl.sample_short_term_anchor(h, start, substream(seed, "anchor", epoch, bid))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", cl.TruncatedSequenceWarning)
                    examples.append(cl.make_short_term_example(h, prof, a))
            elif task == "long":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", cl.TruncatedSequenceWarning)
                    examples.append(cl.make_long_term_example(h, prof, threshold))
            else:
                raise ValueError(f"unknown task {task!r}")
        except (cl.SampleUnavailable, cl.Excluded):
            skipped += 1
    if skipped:
        log.info("%d beneficiaries without a usable %s-term example", skipped, task)
    return from_examples(examples, task)


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = substream(seed, "split").permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
