"""Counter-based random streams.

One Philox root stream per chain, derived from (seed, chain id).  Steps that
are conceptually parallel across units draw their randomness as blocks in
canonical unit order before any unit is processed, so serial and
data-parallel execution consume identical draws.
"""

from __future__ import annotations

import numpy as np

__all__ = ["chain_rng", "bitgen_state", "restore_rng"]

_STREAM_SALT = 0x70616E656C6D6978  # package tag, keeps streams distinct from other tools


def chain_rng(seed: int, chain_id: int = 0) -> np.random.Generator:
    """Root generator for one chain."""
    ss = np.random.SeedSequence([_STREAM_SALT, int(seed), int(chain_id)])
    return np.random.Generator(np.random.Philox(ss))


def bitgen_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of the generator position."""
    state = rng.bit_generator.state
    out = {
        "bit_generator": state["bit_generator"],
        "counter": [int(v) for v in state["state"]["counter"]],
        "key": [int(v) for v in state["state"]["key"]],
        "buffer": [int(v) for v in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }
    return out


def restore_rng(snapshot: dict) -> np.random.Generator:
    """Rebuild a generator at a serialized position."""
    if snapshot["bit_generator"] != "Philox":
        raise ValueError("checkpoint was not produced by a Philox stream")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(snapshot["counter"], dtype=np.uint64),
            "key": np.array(snapshot["key"], dtype=np.uint64),
        },
        "buffer": np.array(snapshot["buffer"], dtype=np.uint64),
        "buffer_pos": snapshot["buffer_pos"],
        "has_uint32": snapshot["has_uint32"],
        "uinteger": snapshot["uinteger"],
    }
    return np.random.Generator(bg)
