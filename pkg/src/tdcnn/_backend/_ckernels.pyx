# cython: boundscheck=False, wraparound=False, initializedcheck=False
# cython: cdivision=True, language_level=3
"""Compiled strict-order kernels.

Every accumulation here adds terms in ascending contraction-index order with
one rounded multiply and one rounded add per term, so results are
bit-identical to the naive loop oracles (the build disables FP contraction).
"""

ctypedef fused real:
    float
    double


def matmul_acc(real[:, ::1] a, real[:, ::1] b, real[:, ::1] out):
    """out[i, j] += sum_p a[i, p] * b[p, j], terms added in ascending p.

    Accumulates into whatever the caller preloaded in ``out`` (zeros, or a
    per-row bias), so a row-initialized product costs nothing extra.
    """
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, p, j
    cdef real aip
    for i in range(m):
        for p in range(kk):
            aip = a[i, p]
            for j in range(n):
                out[i, j] = out[i, j] + aip * b[p, j]


def im2col3x3(real[:, :, :, ::1] xpad, real[:, ::1] cols):
    """Gather 3x3 patches: cols[(c*3+u)*3+v, (n*H+i)*W+j] = xpad[n, c, i+u, j+v].

    Row index runs over (channel, kernel row, kernel col) in that order;
    matmul over these rows therefore accumulates in the same ascending
    (c, u, v) order as the direct convolution loop.
    """
    cdef Py_ssize_t nb = xpad.shape[0], cin = xpad.shape[1]
    cdef Py_ssize_t h = xpad.shape[2] - 2, w = xpad.shape[3] - 2
    cdef Py_ssize_t n, c, u, v, i, j, row, base
    for c in range(cin):
        for u in range(3):
            for v in range(3):
                row = (c * 3 + u) * 3 + v
                for n in range(nb):
                    for i in range(h):
                        base = (n * h + i) * w
                        for j in range(w):
                            cols[row, base + j] = xpad[n, c, i + u, j + v]


def col2im3x3_add(real[:, ::1] cols, real[:, :, :, ::1] xpad_out):
    """Scatter-add the inverse of im2col3x3 into a padded image gradient."""
    cdef Py_ssize_t nb = xpad_out.shape[0], cin = xpad_out.shape[1]
    cdef Py_ssize_t h = xpad_out.shape[2] - 2, w = xpad_out.shape[3] - 2
    cdef Py_ssize_t n, c, u, v, i, j, row, base
    for c in range(cin):
        for u in range(3):
            for v in range(3):
                row = (c * 3 + u) * 3 + v
                for n in range(nb):
                    for i in range(h):
                        base = (n * h + i) * w
                        for j in range(w):
                            xpad_out[n, c, i + u, j + v] = (
                                xpad_out[n, c, i + u, j + v] + cols[row, base + j]
                            )
