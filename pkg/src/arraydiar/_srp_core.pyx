# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for steered-response power accumulation."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def srp_accumulate(double[:, ::1] cc, cnp.int64_t[:, ::1] lag_idx):
    """Sum per-pair correlation values at each direction's steering lags.

    cc: (n_pairs, n_fft) circular GCC-PHAT values.
    lag_idx: (n_dirs, n_pairs) indices into the lag axis.
    Returns (n_dirs,) float64 powers.
    """
    cdef Py_ssize_t n_dirs = lag_idx.shape[0]
    cdef Py_ssize_t n_pairs = lag_idx.shape[1]
    cdef Py_ssize_t d, p
    cdef double acc
    out = np.empty(n_dirs, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for d in range(n_dirs):
            acc = 0.0
            for p in range(n_pairs):
                acc += cc[p, lag_idx[d, p]]
            out_v[d] = acc
    return out


def srp_accumulate_batch(double[:, :, ::1] cc, cnp.int64_t[:, ::1] lag_idx):
    """Batched variant: cc is (n_frames, n_pairs, n_fft), result (n_frames, n_dirs)."""
    cdef Py_ssize_t n_frames = cc.shape[0]
    cdef Py_ssize_t n_dirs = lag_idx.shape[0]
    cdef Py_ssize_t n_pairs = lag_idx.shape[1]
    cdef Py_ssize_t f, d, p
    cdef double acc
    out = np.empty((n_frames, n_dirs), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    with nogil:
        for f in range(n_frames):
            for d in range(n_dirs):
                acc = 0.0
                for p in range(n_pairs):
                    acc += cc[f, p, lag_idx[d, p]]
                out_v[f, d] = acc
    return out
