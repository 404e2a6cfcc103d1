"""Pure-NumPy fallback for the SRP accumulation kernel.

Sums pairs sequentially (left fold) so both backends produce bit-identical
powers regardless of which one is selected at import.
"""

import numpy as np


def srp_accumulate(cc, lag_idx):
    """Sum per-pair correlation values at each direction's steering lags.

    Args:
        cc: (n_pairs, n_fft) circular GCC-PHAT values, float64.
        lag_idx: (n_dirs, n_pairs) integer indices into the lag axis.

    Returns:
        (n_dirs,) float64 steered-response powers.
    """
    gathered = cc[np.arange(cc.shape[0])[None, :], lag_idx]
    out = gathered[:, 0].astype(np.float64, copy=True)
    for p in range(1, gathered.shape[1]):
        out += gathered[:, p]
    return out


def srp_accumulate_batch(cc, lag_idx):
    """Batched variant: cc is (n_frames, n_pairs, n_fft), result (n_frames, n_dirs)."""
    gathered = cc[:, np.arange(cc.shape[1])[None, :], lag_idx]
    out = gathered[..., 0].astype(np.float64, copy=True)
    for p in range(1, gathered.shape[2]):
        out += gathered[..., p]
    return out
