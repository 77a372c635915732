"""Decision-assist pairs: zero-return samples for actions the environment marks unavailable."""

from __future__ import annotations

import numpy as np

from ..environment import HybridAction, Transition


def decision_assist_pairs(obs: np.ndarray, mask: np.ndarray, head_arms: list[int],
                          continuous_dim: int) -> list[Transition]:
    """One terminal, zero-reward transition per masked (head, arm).

    ``mask`` is the (heads, max_arms) availability array; padding arms beyond
    a head's arm count are structural and produce no pair.  Other heads are
    left unspecified (arm -1), so only the masked head's Q-value is trained.
    """
    mask = np.asarray(mask, dtype=bool)
    out = []
    zeros = np.zeros(continuous_dim)
    for h, n_arms in enumerate(head_arms):
        for arm in np.flatnonzero(~mask[h, :n_arms]):
            disc = np.full(len(head_arms), -1, dtype=np.int64)
            disc[h] = arm
            out.append(Transition(state=obs, action=HybridAction(disc, zeros), reward=0.0,
                                  next_state=obs, done=True, mask=mask))
    return out
