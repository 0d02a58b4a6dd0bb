"""Deterministic random substreams.

Every random draw in a run comes from

    SeedSequence(master, spawn_key=(module, N, purpose, block))

with small integer codes for module and purpose (tables below).  The stream
for a given (module, N, purpose, block) never depends on which other streams
were used or in what order, so work can be split across processes without
changing results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODULES = {"grid": 1, "bandwidth": 2, "dgff": 3, "voronoi": 4, "sobolev": 5}
PURPOSES = {"points": 1, "reference": 2, "samples": 3, "probes": 4, "tightness": 5}

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class StreamId:
    module: str
    n: int
    purpose: str
    block: int = 0

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (MODULES[self.module], int(self.n), PURPOSES[self.purpose], int(self.block))

    def label(self) -> str:
        return f"{self.module}/{self.n}/{self.purpose}/{self.block}"


class StreamFactory:
    """Hands out generators keyed by StreamId and remembers which were used."""

    def __init__(self, master: int):
        if not 0 <= int(master) <= MAX_SEED:
            raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master}")
        self.master = int(master)
        self._used: dict[str, list[int]] = {}

    def rng(self, module: str, n: int, purpose: str, block: int = 0) -> np.random.Generator:
        sid = StreamId(module, n, purpose, block)
        self._used[sid.label()] = list(sid.key)
        return np.random.default_rng(np.random.SeedSequence(self.master, spawn_key=sid.key))

    def used(self) -> dict[str, list[int]]:
        return dict(sorted(self._used.items()))
