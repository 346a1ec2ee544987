"""Deterministic seed fan-out from one root seed.

Every randomized component gets its seed by hashing the root seed with a
label path, so adding or reordering components never shifts anyone
else's random stream.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *labels: str) -> int:
    """Stable 63-bit child seed for a label path under a root seed."""
    text = str(int(root)) + "/" + "/".join(labels)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (1 << 63)
