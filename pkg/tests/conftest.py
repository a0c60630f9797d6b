import numpy as np


def brute_force_best_split(x, y, n_classes):
    """Exhaustive best Gini split over every feature and midpoint.

    Independent oracle for the tree growers: plain loops, first feature in
    ascending order wins ties, lowest threshold wins within a feature,
    strictly better decrease required to replace the incumbent.
    """
    n, d = x.shape
    parent_counts = np.bincount(y, minlength=n_classes)
    gini_parent = 1.0 - float((parent_counts * parent_counts).sum()) / (n * n)
    best = None
    for f in range(d):
        values = sorted(set(x[:, f]))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2.0
            left = y[x[:, f] <= thr]
            right = y[x[:, f] > thr]
            lc = np.bincount(left, minlength=n_classes)
            rc = np.bincount(right, minlength=n_classes)
            nl, nr = float(len(left)), float(len(right))
            gini_left = 1.0 - (lc * lc).sum() / (nl * nl)
            gini_right = 1.0 - (rc * rc).sum() / (nr * nr)
            decrease = gini_parent - (nl / n) * gini_left - (nr / n) * gini_right
            if best is None or decrease > best[2]:
                best = (f, thr, decrease)
    return best
