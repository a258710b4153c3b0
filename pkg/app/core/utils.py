import math
from typing import Iterable, Optional

import numpy as np


def fsum_mean(values: Iterable[float]) -> Optional[float]:
    """
    Order-independent mean of the non-NaN values.

    Uses math.fsum so the result does not depend on summation order
    (parallel and sequential reductions agree bit for bit).

    Returns:
        The mean, or None if no finite value is present
    """
    kept = [float(v) for v in values if not math.isnan(v)]
    if not kept:
        return None
    return math.fsum(kept) / len(kept)


def clamp(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def descending_order(keys: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """
    Indices ordering `keys` descending, ties broken by ascending `ids`.

    Args:
        keys: Ranking key per candidate
        ids: Candidate identifiers (user-ids or item-ids)

    Returns:
        Index array into keys/ids
    """
    return np.lexsort((ids, -keys))
