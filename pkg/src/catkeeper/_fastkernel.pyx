# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled trajectory kernel.

Same contract as the numpy kernel (see _kernel_py): exact per-interval
damping via banded Kraus coefficients, two uniforms per step (detection
then branch), diagonal branch masks. The per-trajectory loop runs without
the GIL, so chunked calls can be spread across threads.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef double complex c128


def run_batch(
    int dim,
    int n_steps,
    cnp.ndarray[c128, ndim=2, mode="c"] rho0,
    cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] offsets,
    cnp.ndarray[double, ndim=2, mode="c"] coeffs,
    cnp.ndarray[c128, ndim=1, mode="c"] d_plus,
    cnp.ndarray[c128, ndim=1, mode="c"] d_plus_conj,
    cnp.ndarray[c128, ndim=1, mode="c"] d_minus,
    cnp.ndarray[c128, ndim=1, mode="c"] d_minus_conj,
    cnp.ndarray[double, ndim=1, mode="c"] w_plus,
    cnp.ndarray[double, ndim=1, mode="c"] w_minus,
    cnp.ndarray[c128, ndim=2, mode="c"] refs,
    cnp.ndarray[c128, ndim=2, mode="c"] refs_conj,
    cnp.ndarray[double, ndim=1, mode="c"] photon,
    cnp.ndarray[double, ndim=1, mode="c"] parity_sign,
    double efficiency,
    cnp.ndarray[cnp.uint8_t, ndim=1, mode="c"] forced_miss,
    cnp.ndarray[double, ndim=2, mode="c"] uniforms,
    cnp.ndarray[cnp.int8_t, ndim=2, mode="c"] outcomes,
    cnp.ndarray[double, ndim=2, mode="c"] prob_upper,
    cnp.ndarray[double, ndim=2, mode="c"] prob_lower,
    cnp.ndarray[double, ndim=2, mode="c"] fidelity,
    cnp.ndarray[double, ndim=2, mode="c"] nbar,
    cnp.ndarray[double, ndim=2, mode="c"] parity,
    cnp.ndarray[c128, ndim=3, mode="c"] final,
    int record_final,
    double degeneracy_floor,
):
    """Fill the output arrays in place; return -1 or the failing step."""
    cdef int batch = uniforms.shape[0]
    cdef int nbands = offsets.shape[0]

    work_a = np.empty(dim * dim, dtype=np.complex128)
    work_b = np.empty(dim * dim, dtype=np.complex128)
    cdef c128[::1] wa = work_a
    cdef c128[::1] wb = work_b
    cdef c128 *cur = &wa[0]
    cdef c128 *nxt = &wb[0]
    cdef c128 *tmp
    cdef c128 *r0 = <c128 *> rho0.data

    cdef int b, s, i, j, band, k, dk, row, src, code
    cdef long idx, size = <long> dim * dim
    cdef double ci, p_plus, p_minus, total, inv, u_detect, u_branch
    cdef double diag_re, nb_val, par_val
    cdef c128 acc, fsum, di
    cdef int err_step = -1

    with nogil:
        for b in range(batch):
            for idx in range(size):
                cur[idx] = r0[idx]
            for s in range(n_steps):
                # exact damping over one interval
                for idx in range(size):
                    nxt[idx] = 0.0
                for band in range(nbands):
                    k = <int> offsets[band]
                    dk = dim - k
                    for i in range(dk):
                        ci = coeffs[band, i + k]
                        if ci != 0.0:
                            src = (i + k) * dim + k
                            row = i * dim
                            for j in range(dk):
                                nxt[row + j] = nxt[row + j] + (
                                    ci * coeffs[band, j + k] * cur[src + j]
                                )
                tmp = cur
                cur = nxt
                nxt = tmp

                p_plus = 0.0
                p_minus = 0.0
                for i in range(dim):
                    diag_re = cur[i * dim + i].real
                    p_plus += w_plus[i] * diag_re
                    p_minus += w_minus[i] * diag_re
                total = p_plus + p_minus
                if total < degeneracy_floor:
                    err_step = s
                    break

                u_detect = uniforms[b, 2 * s]
                u_branch = uniforms[b, 2 * s + 1]
                if forced_miss[s] == 0 and u_detect < efficiency:
                    if u_branch * total < p_plus:
                        code = 0
                        inv = 1.0 / p_plus
                        for i in range(dim):
                            di = d_plus[i] * inv
                            row = i * dim
                            for j in range(dim):
                                cur[row + j] = cur[row + j] * di * d_plus_conj[j]
                    else:
                        code = 1
                        inv = 1.0 / p_minus
                        for i in range(dim):
                            di = d_minus[i] * inv
                            row = i * dim
                            for j in range(dim):
                                cur[row + j] = cur[row + j] * di * d_minus_conj[j]
                else:
                    code = 2
                    for i in range(dim):
                        row = i * dim
                        for j in range(dim):
                            cur[row + j] = cur[row + j] * (
                                d_plus[i] * d_plus_conj[j]
                                + d_minus[i] * d_minus_conj[j]
                            )

                outcomes[b, s] = code
                prob_upper[b, s] = p_plus
                prob_lower[b, s] = p_minus

                fsum = 0.0
                for i in range(dim):
                    row = i * dim
                    acc = 0.0
                    for j in range(dim):
                        acc = acc + cur[row + j] * refs[s, j]
                    fsum = fsum + refs_conj[s, i] * acc
                fidelity[b, s] = fsum.real

                nb_val = 0.0
                par_val = 0.0
                for i in range(dim):
                    diag_re = cur[i * dim + i].real
                    nb_val += photon[i] * diag_re
                    par_val += parity_sign[i] * diag_re
                nbar[b, s] = nb_val
                parity[b, s] = par_val
            if err_step >= 0:
                break
            if record_final:
                for idx in range(size):
                    final[b, idx // dim, idx % dim] = cur[idx]
    return err_step
