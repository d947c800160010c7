"""Named, counter-based random streams.

A stream is identified by ``(base_seed, role, *key)``: for example
``stream(7, "missingness", 3)`` is the missingness stream of replication 3.
Streams are Philox generators seeded through :class:`numpy.random.SeedSequence`,
so distinct keys give statistically independent streams. A replication's draws
therefore do not depend on how many replications run, or in what order.
"""
from __future__ import annotations

import zlib

import numpy as np

ROLES = (
    "covariates",
    "individual",
    "missingness",
    "outcome",
    "split",
    "bootstrap",
    "panel",
)


def _role_code(role: str) -> int:
    if role not in ROLES:
        raise ValueError(f"unknown random stream role {role!r}")
    # crc32 keeps the code stable if ROLES is reordered
    return zlib.crc32(role.encode("ascii"))


def stream(seed: int, role: str, *key: int) -> np.random.Generator:
    """Return the generator for ``role`` under ``seed`` and replication ``key``."""
    if int(seed) < 0:
        raise ValueError("seed must be nonnegative")
    spawn_key = tuple(int(k) for k in key) + (_role_code(role),)
    ss = np.random.SeedSequence(int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))
