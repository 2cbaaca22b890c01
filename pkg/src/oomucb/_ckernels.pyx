# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode simulator.

Must stay bit-for-bit equivalent to :mod:`oomucb._pykernels`; both consume
the same pre-drawn uniforms and the same CDF tables.
"""

cdef inline Py_ssize_t _draw(const double[:] cdf, double u) noexcept nogil:
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t last = cdf.shape[0] - 1
    while i < last and u >= cdf[i]:
        i += 1
    return i


def simulate(const double[:] init_cdf,
             const double[:, :, :, :] trans_cdf,
             const double[:, :, :] emit_cdf,
             const long long[:] policy_table,
             const long long[:] policy_offsets,
             const long long[:, :] forced,
             const long long[:] stop,
             const double[:, :] uniforms,
             long long[:, :] obs,
             long long[:, :] actions,
             long long[:, :] states):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t num_obs = emit_cdf.shape[2]
    cdef Py_ssize_t i, j, length
    cdef long long s, o, a, idx
    with nogil:
        for i in range(n):
            length = stop[i]
            s = _draw(init_cdf, uniforms[i, 0])
            idx = 0
            for j in range(length):
                states[i, j] = s
                o = _draw(emit_cdf[j, s], uniforms[i, 2 * j + 1])
                obs[i, j] = o
                if j == length - 1:
                    break
                idx = idx * num_obs + o
                a = forced[i, j]
                if a < 0:
                    a = policy_table[policy_offsets[j] + idx]
                actions[i, j] = a
                s = _draw(trans_cdf[j, a, s], uniforms[i, 2 * j + 2])
