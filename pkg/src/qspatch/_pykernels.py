"""Pure-Python stopping-time walk (fallback for the compiled kernel)."""
import numpy as np


def hold(eta, eps):
    """Piecewise-constant sampling of ``eta`` on its eps-stopping partition.

    Returns ``(held, cuts)``: ``held[j]`` is ``eta`` at the start of the cell
    containing step ``j``; ``cuts`` are the partition indices ending at ``N``.
    """
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    n = len(eta)
    held = np.empty(n)
    vals = eta.tolist()
    anchor = vals[0]
    held_list = [anchor]
    cuts = [0]
    for j in range(1, n - 1):
        v = vals[j]
        if abs(v - anchor) >= eps:
            anchor = v
            cuts.append(j)
        held_list.append(anchor)
    if n > 1:
        held_list.append(vals[-1])
        cuts.append(n - 1)
    held[:] = held_list
    return held, np.asarray(cuts, dtype=np.int64)


def hold_levels(eta, levels):
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    return np.stack([hold(eta, float(e))[0] for e in levels]) if len(levels) else np.empty((0, len(eta)))
