"""Seed derivation and stable hashing helpers.

Every random quantity in the toolkit is drawn from a numpy Generator seeded
through `derive_seed`, so that (master_seed, structural position) fully
determines a dataset or a training run. Python's builtin `hash` is salted per
process and must not be used here; we hash through sha256 instead.
"""

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    """Serialize `obj` deterministically (sorted keys, no whitespace drift)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def stable_hash(obj, length: int = 16) -> str:
    """Hex digest of the canonical JSON form of `obj` (content-addressed keys)."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:length]


def derive_seed(master_seed: int, *parts) -> int:
    """Derive a child seed from a master seed and a structural position.

    Parts may be ints or strings (e.g. sample index, domain name, repeat id).
    The derivation is stable across processes and platforms.
    """
    payload = canonical_json([int(master_seed), [str(p) for p in parts]])
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed: int, *parts) -> np.random.Generator:
    """Fresh Generator owned by the (master_seed, *parts) position."""
    return np.random.default_rng(derive_seed(master_seed, *parts))
