"""Independent straight-line transcriptions used as oracles by the tests."""

from __future__ import annotations

import numpy as np


def weighted_mean_ref(values, weights):
    vals = [float(v) for v in values]
    ws = [float(w) for w in weights]
    if all(v == vals[0] for v in vals):
        return vals[0]
    num = 0.0
    den = 0.0
    for v, w in zip(vals, ws):
        num += v * w
        den += w
    return num / den


def regenerate_reference(reliable_idx, unreliable_idx, coords, pseudo,
                         k, beta, gamma, theta_w):
    """Line-by-line re-generation: brute-force distances, no spatial index.

    Follows the documented conventions: distance ties broken by lower cell
    index, identical-value weighted means short-circuit, relative differences
    around an exactly-zero mean are 0 on agreement and +inf otherwise.
    """
    coords = np.asarray(coords, dtype=np.float64)
    pseudo = np.asarray(pseudo, dtype=np.float64)
    rel = np.asarray(reliable_idx, dtype=np.int64)
    kept = [int(i) for i in rel]
    motion = [pseudo[i].copy() for i in rel]
    provenance = [0] * len(kept)
    for i in unreliable_idx:
        if len(rel) == 0:
            continue
        dists = []
        for j in rel:
            dx = coords[j, 0] - coords[i, 0]
            dy = coords[j, 1] - coords[i, 1]
            dists.append(np.sqrt(dx * dx + dy * dy))
        dists = np.array(dists)
        order = np.lexsort((rel, dists))[:k]
        order = [o for o in order if dists[o] < beta]
        if not order:
            continue
        d_k = dists[order]
        m_k = pseudo[rel[order]]
        w = np.exp(-d_k / theta_w)
        mean = np.array([weighted_mean_ref(m_k[:, 0], w),
                         weighted_mean_ref(m_k[:, 1], w)])
        dif = np.empty_like(m_k)
        for c in range(2):
            for row in range(len(m_k)):
                dev = m_k[row, c] - mean[c]
                if mean[c] == 0.0:
                    dif[row, c] = 0.0 if dev == 0.0 else np.inf
                else:
                    dif[row, c] = abs(dev / mean[c])
        h = np.exp(-(weighted_mean_ref(dif[:, 0], w)
                     + weighted_mean_ref(dif[:, 1], w)) / 2.0)
        if h > gamma:
            kept.append(int(i))
            motion.append(mean)
            provenance.append(1)
    return (np.array(kept, dtype=np.int64),
            np.array(motion, dtype=np.float64).reshape(-1, 2),
            np.array(provenance, dtype=np.int64))
