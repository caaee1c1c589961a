# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tuple-coverage kernels for covering-array construction.

Rows are level-index vectors. Tuple identities are linearized per option
combination: id = offsets[c] + sum_j strides[c, j] * row[combos[c, j]].
"""

from libc.stdint cimport int32_t, int64_t, uint8_t


def count_new(const int32_t[:, ::1] rows,
              const int32_t[:, ::1] combos,
              const int64_t[::1] offsets,
              const int64_t[:, ::1] strides,
              const uint8_t[::1] covered,
              int64_t[::1] out):
    """For each candidate row, count the currently uncovered tuples it hits."""
    cdef Py_ssize_t n_rows = rows.shape[0]
    cdef Py_ssize_t n_combos = combos.shape[0]
    cdef Py_ssize_t width = combos.shape[1]
    cdef Py_ssize_t r, c, j
    cdef int64_t ident, count
    for r in range(n_rows):
        count = 0
        for c in range(n_combos):
            ident = offsets[c]
            for j in range(width):
                ident += strides[c, j] * rows[r, combos[c, j]]
            if covered[ident] == 0:
                count += 1
        out[r] = count


def mark_row(const int32_t[::1] row,
             const int32_t[:, ::1] combos,
             const int64_t[::1] offsets,
             const int64_t[:, ::1] strides,
             uint8_t[::1] covered):
    """Mark every tuple of the row as covered; returns the newly covered count."""
    cdef Py_ssize_t n_combos = combos.shape[0]
    cdef Py_ssize_t width = combos.shape[1]
    cdef Py_ssize_t c, j
    cdef int64_t ident
    cdef int64_t fresh = 0
    for c in range(n_combos):
        ident = offsets[c]
        for j in range(width):
            ident += strides[c, j] * row[combos[c, j]]
        if covered[ident] == 0:
            covered[ident] = 1
            fresh += 1
    return fresh
