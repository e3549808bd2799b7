"""Counter-based random substreams.

Every random decision in a simulation (check-in coin, batch indices, noise
draw, data shuffle) pulls from its own Philox stream keyed by
(master_seed, purpose, client, round).  Philox is counter-based, so streams
with distinct keys are independent by construction and the result of a run
does not depend on the order clients are processed in, or on how many draws
another subsystem consumed.
"""

from __future__ import annotations

import numpy as np

# Purpose tags keep streams for different subsystems disjoint even when the
# (client, round) pair coincides.
CHECKIN = 1
BATCH = 2
NOISE = 3
PARTITION = 4
HOLDOUT = 5
SERVER_SAMPLE = 6

_MASK64 = (1 << 64) - 1


def substream(master_seed: int, purpose: int, client: int = 0, round_index: int = 0) -> np.random.Generator:
    """Independent generator for one (purpose, client, round) cell.

    client and round each get 28 bits, purpose 8; enough for any desk-scale
    sweep and collision-free within one master seed.
    """
    if not (0 <= client < (1 << 28)) or not (0 <= round_index < (1 << 28)):
        raise ValueError("client and round_index must be in [0, 2**28)")
    if not (0 <= purpose < (1 << 8)):
        raise ValueError("purpose must be in [0, 256)")
    lane = (purpose << 56) | (client << 28) | round_index
    key = np.array([master_seed & _MASK64, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
