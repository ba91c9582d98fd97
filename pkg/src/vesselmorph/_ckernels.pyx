# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled thinning kernel. Mirrors ``_neighborhood.thin_py`` step for step."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline int _code(const unsigned char* p, Py_ssize_t i, Py_ssize_t w) noexcept nogil:
    return (p[i - w]
            | (p[i - w + 1] << 1)
            | (p[i + 1] << 2)
            | (p[i + w + 1] << 3)
            | (p[i + w] << 4)
            | (p[i + w - 1] << 5)
            | (p[i - 1] << 6)
            | (p[i - w - 1] << 7))


cdef Py_ssize_t _subiteration(unsigned char* img, Py_ssize_t w, const unsigned char[::1] table,
                              const unsigned char[::1] simple, const unsigned char[::1] degree,
                              unsigned char* codes, unsigned char* state,
                              Py_ssize_t[::1] fg, Py_ssize_t nfg, Py_ssize_t[::1] buf) noexcept nogil:
    # state bit 0: candidate, bit 1: held back
    cdef Py_ssize_t i, j, k, n = 0, deleted = 0
    cdef int code
    for k in range(nfg):
        i = fg[k]
        if img[i]:
            code = _code(img, i, w)
            codes[i] = code
            if table[code]:
                state[i] = 1
                buf[n] = i
                n += 1
    for k in range(n):
        i = buf[k]
        j = i + 1
        if state[j] & 1 and not (simple[codes[i] & 0xFB] and simple[codes[j] & 0xBF]):
            state[i] |= 2
            state[j] |= 2
        j = i + w
        if state[j] & 1 and not (simple[codes[i] & 0xEF] and simple[codes[j] & 0xFE]):
            state[i] |= 2
            state[j] |= 2
        if (degree[codes[i]] == 3 and state[i + 1] & 1 and degree[codes[i + 1]] == 3
                and state[i + w] & 1 and degree[codes[i + w]] == 3
                and state[i + w + 1] & 1 and degree[codes[i + w + 1]] == 3):
            state[i] |= 2
            state[i + 1] |= 2
            state[i + w] |= 2
            state[i + w + 1] |= 2
    for k in range(n):
        i = buf[k]
        if state[i] == 1:
            img[i] = 0
            deleted += 1
        state[i] = 0
    return deleted


cdef Py_ssize_t _compact(const unsigned char* img, Py_ssize_t[::1] fg, Py_ssize_t nfg) noexcept nogil:
    cdef Py_ssize_t k, m = 0
    for k in range(nfg):
        if img[fg[k]]:
            fg[m] = fg[k]
            m += 1
    return m


def thin_c(cnp.ndarray[cnp.uint8_t, ndim=2] image, zs1, zs2, post, simple, degree):
    """Thin a padded 0/1 uint8 C-contiguous image in place; return ZS iterations."""
    if not image.flags["C_CONTIGUOUS"]:
        raise ValueError("image must be C-contiguous")
    cdef unsigned char* img = <unsigned char*> cnp.PyArray_DATA(image)
    cdef const unsigned char[::1] t1 = zs1
    cdef const unsigned char[::1] t2 = zs2
    cdef const unsigned char[::1] tp = post
    cdef const unsigned char[::1] ts = simple
    cdef const unsigned char[::1] td = degree
    cdef Py_ssize_t w = image.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] codes_arr = np.zeros(image.size, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] state_arr = np.zeros(image.size, dtype=np.uint8)
    cdef unsigned char* codes = <unsigned char*> cnp.PyArray_DATA(codes_arr)
    cdef unsigned char* state = <unsigned char*> cnp.PyArray_DATA(state_arr)
    cdef Py_ssize_t[::1] fg = np.flatnonzero(image).astype(np.intp)
    cdef Py_ssize_t nfg = fg.shape[0]
    cdef Py_ssize_t[::1] buf = np.empty(max(nfg, 1), dtype=np.intp)
    cdef Py_ssize_t k, i, deleted
    cdef int iterations = 0
    with nogil:
        while True:
            deleted = _subiteration(img, w, t1, ts, td, codes, state, fg, nfg, buf)
            deleted += _subiteration(img, w, t2, ts, td, codes, state, fg, nfg, buf)
            iterations += 1
            nfg = _compact(img, fg, nfg)
            if deleted == 0:
                break
        while True:
            deleted = 0
            for k in range(nfg):
                i = fg[k]
                if img[i] and tp[_code(img, i, w)]:
                    img[i] = 0
                    deleted += 1
            nfg = _compact(img, fg, nfg)
            if deleted == 0:
                break
    return iterations
