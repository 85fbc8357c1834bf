"""Deterministic seed derivation.

All randomness in a run flows from one base seed through child_seed with
distinct integer tags, so adding a stage never perturbs the seeds of
existing ones and repetitions are independent but exactly replayable.
"""

from __future__ import annotations

import numpy as np

# Tag namespace for child_seed. Values are part of the reproducibility
# contract: changing them changes every derived stream.
TAG_SPLIT = 1
TAG_BASE_INIT = 2
TAG_LEVEL_INIT = 3
TAG_FINAL_INIT = 4
TAG_SHUFFLE_TRAIN = 5
TAG_SHUFFLE_VALID = 6
TAG_PRETRAIN_INIT = 7
TAG_REPETITION = 8


def child_seed(base: int, *tags: int) -> int:
    """Derive an independent seed from a base seed and an integer tag path."""
    seq = np.random.SeedSequence([int(base), *(int(t) for t in tags)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)
