"""Reproducible temporal and channel masking for speech MLM.

A mask plan is a pure function of (seed, n, d, p_time, p_channel): each
frame index is dropped independently with p_time, each channel index with
p_channel, and corruption means zeroing (no keep/replace-with-random
split). Plans index feature frames only; the encoder-side [CLS] slot is
prepended after corruption and can never be masked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from speechalign.errors import ContractError
from speechalign.features import FeatureMatrix


@dataclass(frozen=True)
class MaskPlan:
    masked_time_indices: tuple[int, ...]
    masked_channel_indices: tuple[int, ...]
    seed: int
    p_time: float
    p_channel: float
    n: int
    d: int

    def loss_positions(self) -> np.ndarray:
        """Boolean (n, d): entries whose reconstruction enters the loss.

        A frame masked both temporally and through a channel is counted
        once (set union, no double counting).
        """
        m = np.zeros((self.n, self.d), dtype=bool)
        m[list(self.masked_time_indices), :] = True
        m[:, list(self.masked_channel_indices)] = True
        return m

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "n": self.n,
                "d": self.d,
                "p_time": self.p_time,
                "p_channel": self.p_channel,
                "masked_time_indices": list(self.masked_time_indices),
                "masked_channel_indices": list(self.masked_channel_indices),
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "MaskPlan":
        obj = json.loads(text)
        return MaskPlan(
            masked_time_indices=tuple(obj["masked_time_indices"]),
            masked_channel_indices=tuple(obj["masked_channel_indices"]),
            seed=obj["seed"],
            p_time=obj["p_time"],
            p_channel=obj["p_channel"],
            n=obj["n"],
            d=obj["d"],
        )


def plan_masks(n: int, d: int, p_time: float, p_channel: float, seed: int) -> MaskPlan:
    if not (0.0 <= p_time <= 1.0 and 0.0 <= p_channel <= 1.0):
        raise ContractError(f"mask probabilities must be in [0, 1], got {p_time}, {p_channel}")
    rng = np.random.default_rng(seed)
    time_idx = np.flatnonzero(rng.random(n) < p_time)
    chan_idx = np.flatnonzero(rng.random(d) < p_channel)
    return MaskPlan(
        masked_time_indices=tuple(int(i) for i in time_idx),
        masked_channel_indices=tuple(int(j) for j in chan_idx),
        seed=seed,
        p_time=p_time,
        p_channel=p_channel,
        n=n,
        d=d,
    )


def apply_masks(feats: FeatureMatrix, plan: MaskPlan) -> FeatureMatrix:
    """Zero the planned frames and channels; the input is not mutated."""
    if plan.n != feats.frames or plan.d != feats.channels:
        raise ContractError(
            f"plan is for {plan.n}x{plan.d}, features are {feats.frames}x{feats.channels}"
        )
    values = feats.values.copy()
    values[list(plan.masked_time_indices), :] = 0.0
    values[:, list(plan.masked_channel_indices)] = 0.0
    return FeatureMatrix(
        values,
        utterance_id=feats.utterance_id,
        speaker_id=feats.speaker_id,
        normalized=feats.normalized,
    )
