# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Dormand-Prince 5(4) kernel; see ``_dopri_py`` for the reference version."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, isfinite

cnp.import_array()

cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0, A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0, E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0, D4 = -10690763975.0 / 1880347072.0
cdef double D5 = 701980252875.0 / 199316789632.0, D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0

cdef double BETA = 0.04
cdef double EXPO1 = 0.2 - 0.04 * 0.75
cdef double SAFE = 0.9
cdef double FACC1 = 1.0 / 0.2
cdef double FACC2 = 1.0 / 10.0
cdef double UROUND = 2.3e-16


cdef inline int dimension(int system) nogil:
    if system == 0:
        return 6
    if system == 5:
        return 1
    return 3


cdef void rhs(int system, const double* p, const double* y, double* out) noexcept nogil:
    cdef double b1 = p[0], b2 = p[1], K = p[2], beta = p[3], gamma = p[4]
    cdef double eta = p[5], mu1 = p[6], mu2 = p[7], eps = p[8], extra = p[9]
    cdef double c, to_m, to_z, rate, inf, rec, wan
    if system == 0:
        c = b2 / (1.0 - K * y[4])
        to_m = b1 * y[0] * y[1]
        to_z = c * y[0] * y[2]
        rate = beta * (1.0 + y[1]) / (1.0 + y[2])
        inf = rate * y[3] * y[4]
        rec = gamma * y[4]
        wan = eta * y[5]
        out[0] = mu1 - to_m - to_z - mu1 * y[0]
        out[1] = to_m - mu1 * y[1]
        out[2] = to_z - mu1 * y[2]
        out[3] = eps * (mu2 - inf + wan - mu2 * y[3])
        out[4] = eps * (inf - rec - mu2 * y[4])
        out[5] = eps * (rec - wan - mu2 * y[5])
        return
    if system == 1:
        c = b2 / (1.0 - K * extra)
        to_m = b1 * y[0] * y[1]
        to_z = c * y[0] * y[2]
        out[0] = mu1 - to_m - to_z - mu1 * y[0]
        out[1] = to_m - mu1 * y[1]
        out[2] = to_z - mu1 * y[2]
        return
    if system == 5:
        out[0] = extra * y[0]
        return
    if system == 2:
        rate = beta
    elif system == 3:
        rate = beta * (2.0 * b1 - mu1) / b1
    else:
        rate = beta * b2 / (2.0 * b2 - mu1 * (1.0 - K * y[1]))
    inf = rate * y[0] * y[1]
    rec = gamma * y[1]
    wan = eta * y[2]
    out[0] = mu2 - inf + wan - mu2 * y[0]
    out[1] = inf - rec - mu2 * y[1]
    out[2] = rec - wan - mu2 * y[2]


cdef int run(int system, const double* p, double t, double* y, double t_end, double rtol, double atol,
             double h, double hmax, Py_ssize_t max_steps, double* errold_io, bint clamp,
             double[::1] ts, double[:, ::1] ys, double[:, :, ::1] dense,
             Py_ssize_t* n_acc_out, Py_ssize_t* n_rej_out, double* h_next_out) noexcept nogil:
    cdef int n = dimension(system)
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double k5[6]
    cdef double k6[6]
    cdef double k7[6]
    cdef double yt[6]
    cdef double y1[6]
    cdef Py_ssize_t n_acc = 0, n_rej = 0
    cdef int status = 0, i
    cdef bint reject = False, last, negative, clamped
    cdef double err, sk, e, fac11, fac, hnew, ydiff, bspl, errold = errold_io[0]
    cdef double h_next
    if hmax < h:
        h = hmax
    if t_end - t < h:
        h = t_end - t
    h_next = h
    rhs(system, p, y, k1)
    while t < t_end:
        if n_acc >= max_steps:
            status = 1
            break
        if fabs(h) <= 10.0 * UROUND * (fabs(t) if fabs(t) > 1.0 else 1.0):
            status = 2
            break
        last = False
        if t + 1.01 * h >= t_end:
            h = t_end - t
            last = True
        for i in range(n):
            yt[i] = y[i] + h * A21 * k1[i]
        rhs(system, p, yt, k2)
        for i in range(n):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs(system, p, yt, k3)
        for i in range(n):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(system, p, yt, k4)
        for i in range(n):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(system, p, yt, k5)
        for i in range(n):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        rhs(system, p, yt, k6)
        for i in range(n):
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        rhs(system, p, y1, k7)
        err = 0.0
        for i in range(n):
            sk = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(y1[i]) else fabs(y1[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]) / sk
            err += e * e
        err = sqrt(err / n)
        if not (err < 1e300):
            err = 1e300
        negative = False
        if clamp:
            for i in range(n):
                if y1[i] < -atol:
                    negative = True
        if err <= 1.0 and not negative:
            fac11 = pow(err, EXPO1)
            fac = fac11 / pow(errold, BETA)
            fac = fac / SAFE
            if fac > FACC1:
                fac = FACC1
            if fac < FACC2:
                fac = FACC2
            hnew = h / fac
            errold = err if err > 1.0e-4 else 1.0e-4
            if clamp:
                clamped = False
                for i in range(n):
                    if y1[i] < 0.0:
                        y1[i] = 0.0
                        clamped = True
                if clamped:
                    rhs(system, p, y1, k7)
            for i in range(n):
                ydiff = y1[i] - y[i]
                bspl = h * k1[i] - ydiff
                dense[n_acc, 0, i] = y[i]
                dense[n_acc, 1, i] = ydiff
                dense[n_acc, 2, i] = bspl
                dense[n_acc, 3, i] = ydiff - h * k7[i] - bspl
                dense[n_acc, 4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            if last:
                t = t_end
            else:
                t = t + h
            for i in range(n):
                y[i] = y1[i]
                k1[i] = k7[i]
                ys[n_acc, i] = y[i]
            ts[n_acc] = t
            n_acc += 1
            if hnew > hmax:
                hnew = hmax
            if reject and hnew > h:
                hnew = h
            reject = False
            h_next = hnew
            h = hnew
        else:
            if negative and err <= 1.0:
                hnew = 0.5 * h
            else:
                fac = pow(err, EXPO1) / SAFE
                hnew = h / (fac if fac < FACC1 else FACC1)
            reject = True
            n_rej += 1
            h = hnew
            h_next = h
    errold_io[0] = errold
    n_acc_out[0] = n_acc
    n_rej_out[0] = n_rej
    h_next_out[0] = h_next
    return status


def dopri_run(int system, p, double t0, y0, double t_end, double rtol, double atol, double h,
              double hmax, Py_ssize_t max_steps, double errold, bint clamp):
    """Same contract as ``_dopri_py.dopri_run``."""
    if system < 0 or system > 5:
        raise ValueError(f"unknown system code {system}")
    cdef int n = dimension(system)
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] yv = np.array(y0, dtype=np.float64)
    if pv.shape[0] != 10 or yv.shape[0] != n:
        raise ValueError("parameter vector must have 10 slots and y0 must match the system dimension")
    ts_arr = np.empty(max_steps, dtype=np.float64)
    ys_arr = np.empty((max_steps, n), dtype=np.float64)
    dense_arr = np.empty((max_steps, 5, n), dtype=np.float64)
    cdef double[::1] ts = ts_arr
    cdef double[:, ::1] ys = ys_arr
    cdef double[:, :, ::1] dense = dense_arr
    cdef Py_ssize_t n_acc = 0, n_rej = 0
    cdef double h_next = h
    cdef int status
    with nogil:
        status = run(system, &pv[0], t0, &yv[0], t_end, rtol, atol, h, hmax, max_steps, &errold, clamp,
                     ts, ys, dense, &n_acc, &n_rej, &h_next)
    return (status, ts_arr[:n_acc].copy(), ys_arr[:n_acc].copy(), dense_arr[:n_acc].copy(),
            int(n_acc), int(n_rej), h_next, errold)
