import hashlib
import json
import logging
from decimal import Decimal, InvalidOperation

import numpy as np

logger = logging.getLogger('nvschottky.utils')


def canonical_json(obj):
    """Serialize ``obj`` with sorted keys and no insignificant whitespace.

    Parameters
    ----------
    obj : dict or list
        JSON-compatible structure; floats are written with ``repr`` precision

    Returns
    -------
    str
        The same text for equal inputs, on every platform
    """
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=True, allow_nan=False)


def stable_hash(obj):
    """SHA-256 hex digest of :func:`canonical_json` of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def r_squared(observed, predicted):
    """Coefficient of determination of ``predicted`` against ``observed``."""
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    total = np.sum((observed - observed.mean()) ** 2)
    if total == 0:
        return 1.0 if np.allclose(observed, predicted) else 0.0
    return float(1.0 - np.sum((observed - predicted) ** 2) / total)


def expand_range(text):
    """Expand ``"start:stop:step"`` (stop inclusive) or ``"v1,v2,..."`` into number strings.

    Range arithmetic is decimal, so ``"1.95:2.05:0.002"`` hits 1.98 exactly.

    Parameters
    ----------
    text : str

    Returns
    -------
    list of str
    """
    text = str(text).strip()
    if ':' not in text:
        return [v.strip() for v in text.split(',') if v.strip()]
    parts = text.split(':')
    if len(parts) != 3:
        raise ValueError(f"Expected start:stop:step, got '{text}'")
    try:
        start, stop, step = (Decimal(v.strip()) for v in parts)
    except InvalidOperation:
        raise ValueError(f"Range '{text}' holds a value that is not a number")
    if step <= 0 or stop < start:
        raise ValueError(f"Range '{text}' must have step > 0 and stop >= start")
    count = int((stop - start) / step) + 1
    return [str(start + i * step) for i in range(count)]
