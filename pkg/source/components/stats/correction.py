import numpy as np

# Two asterisks in the summary tables
DEFAULT_ALPHA = 0.001


def benjamini_hochberg(p_values, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    """
    Benjamini-Hochberg step-up procedure.

    With the p-values sorted ascending, the largest rank i with p(i) <= i * alpha / m is found and
    every hypothesis of rank <= i is rejected. Adjusted p-values are the running minimum of
    m * p(j) / j from the largest rank downwards, clipped to 1.

    Parameters:
        p_values: P-values in [0, 1].
        alpha (float): False discovery rate in (0, 1).

    Returns:
        tuple[np.ndarray, np.ndarray]: Rejection mask and adjusted p-values, in input order.

    Raises:
        ValueError: If a p-value lies outside [0, 1] or alpha outside (0, 1).
    """
    p_values = np.asarray(p_values, dtype=float).ravel()
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}.")
    if np.isnan(p_values).any() or (p_values < 0).any() or (p_values > 1).any():
        raise ValueError("p-values must lie in [0, 1].")
    m = len(p_values)
    if m == 0:
        return np.zeros(0, dtype=bool), np.zeros(0)

    order = np.argsort(p_values, kind="stable")
    ranks = np.arange(1, m + 1)
    ordered = p_values[order]

    below = np.flatnonzero(ordered <= alpha * ranks / m)
    k = below[-1] + 1 if len(below) else 0
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:k]] = True

    adjusted_sorted = np.minimum.accumulate((m * ordered / ranks)[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adjusted_sorted, 1.0)
    return rejected, adjusted
