"""Pure-Python reference implementations of the hot-loop kernels.

These carry the exact semantics the compiled backend must match. The
smoothing kernel works on confidence-sorted inputs grouped into runs of
equal confidence; see exitkit.calib.smooth_correctness for the wrapper
that prepares those arrays.
"""

from __future__ import annotations

import numpy as np


def first_exceed(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Per row, the first column index with score >= threshold.

    Rows where no column qualifies map to scores.shape[1].
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    n, m = scores.shape
    if m == 0:
        return np.zeros(n, dtype=np.int64)
    mask = scores >= threshold
    out = mask.argmax(axis=1).astype(np.int64)
    out[~mask.any(axis=1)] = m
    return out


def smooth_sorted(
    conf: np.ndarray,
    weight: np.ndarray,
    orig_index: np.ndarray,
    run_start: np.ndarray,
    run_end: np.ndarray,
    run_conf: np.ndarray,
    run_wsum: np.ndarray,
    run_of: np.ndarray,
    h: int,
) -> np.ndarray:
    """Mean weight over each sample's h nearest neighbors by confidence.

    Inputs are sorted by (confidence, original index); runs group equal
    confidences. The neighbor set of sorted position p always contains p
    itself plus the h-1 other samples nearest by absolute confidence
    difference, ties resolved by lower original index. Equal-confidence
    runs are consumed whole via prefix sums; only the final, partially
    consumed run (or tied run pair) is walked element by element, which
    bounds that walk by h steps.
    """
    n = conf.shape[0]
    n_runs = run_start.shape[0]
    out = np.empty(n, dtype=np.float64)
    for p in range(n):
        r = int(run_of[p])
        total = weight[p]
        need = h - 1
        # own run first: every other member is at distance zero
        cnt = int(run_end[r]) - int(run_start[r]) - 1
        if need >= cnt:
            total += run_wsum[r] - weight[p]
            need -= cnt
        else:
            q = int(run_start[r])
            while need > 0:
                if q != p:
                    total += weight[q]
                    need -= 1
                q += 1
        left = r - 1
        right = r + 1
        while need > 0:
            dl = conf[p] - run_conf[left] if left >= 0 else np.inf
            dr = run_conf[right] - conf[p] if right < n_runs else np.inf
            if dl < dr:
                cnt = int(run_end[left]) - int(run_start[left])
                if need >= cnt:
                    total += run_wsum[left]
                    need -= cnt
                else:
                    q = int(run_start[left])
                    while need > 0:
                        total += weight[q]
                        need -= 1
                        q += 1
                left -= 1
            elif dr < dl:
                cnt = int(run_end[right]) - int(run_start[right])
                if need >= cnt:
                    total += run_wsum[right]
                    need -= cnt
                else:
                    q = int(run_start[right])
                    while need > 0:
                        total += weight[q]
                        need -= 1
                        q += 1
                right += 1
            else:
                cnt = (
                    int(run_end[left])
                    - int(run_start[left])
                    + int(run_end[right])
                    - int(run_start[right])
                )
                if need >= cnt:
                    total += run_wsum[left] + run_wsum[right]
                    need -= cnt
                    left -= 1
                    right += 1
                else:
                    # tie between both runs: merge by original index
                    a = int(run_start[left])
                    a_end = int(run_end[left])
                    b = int(run_start[right])
                    b_end = int(run_end[right])
                    while need > 0:
                        if b >= b_end or (
                            a < a_end and orig_index[a] < orig_index[b]
                        ):
                            total += weight[a]
                            a += 1
                        else:
                            total += weight[b]
                            b += 1
                        need -= 1
        out[p] = total / h
    return out
