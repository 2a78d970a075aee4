"""Pure-Python Dormand-Prince 5(4) kernel.

Mirrors ``_dopri.pyx`` line for line so the two backends produce the
same accepted steps up to floating-point summation order. The state is
kept in plain lists: for six components, per-step numpy overhead costs
more than it saves.

System codes (``p`` is the 10-slot vector b1, b2, K, beta, gamma, eta,
mu1, mu2, epsilon, extra):

0. coupled system in fast time (6 components)
1. fast layer with I frozen at ``extra`` (3)
2. reduced slow flow on C00, slow time (3)
3. reduced slow flow on C01 (3)
4. reduced slow flow on C02 (3)
5. linear test problem ``y' = extra * y`` (1)
"""

import math

import numpy as np

DIMENSION = {0: 6, 1: 3, 2: 3, 3: 3, 4: 3, 5: 1}

A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
C2, C3, C4, C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
E1, E3, E4, E5, E6, E7 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
D1, D3, D4 = -12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0, -10690763975.0 / 1880347072.0
D5, D6, D7 = 701980252875.0 / 199316789632.0, -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0

BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75
SAFE = 0.9
FACC1 = 1.0 / 0.2
FACC2 = 1.0 / 10.0
UROUND = 2.3e-16


def rhs(system, p, y):
    b1, b2, K, beta, gamma, eta, mu1, mu2, eps, extra = p
    if system == 0:
        U, M, Z, S, I, R = y
        c = b2 / (1.0 - K * I)
        to_m = b1 * U * M
        to_z = c * U * Z
        rate = beta * (1.0 + M) / (1.0 + Z)
        inf = rate * S * I
        rec = gamma * I
        wan = eta * R
        return [mu1 - to_m - to_z - mu1 * U, to_m - mu1 * M, to_z - mu1 * Z,
                eps * (mu2 - inf + wan - mu2 * S), eps * (inf - rec - mu2 * I), eps * (rec - wan - mu2 * R)]
    if system == 1:
        U, M, Z = y
        c = b2 / (1.0 - K * extra)
        to_m = b1 * U * M
        to_z = c * U * Z
        return [mu1 - to_m - to_z - mu1 * U, to_m - mu1 * M, to_z - mu1 * Z]
    if system == 5:
        return [extra * y[0]]
    S, I, R = y
    if system == 2:
        rate = beta
    elif system == 3:
        rate = beta * (2.0 * b1 - mu1) / b1
    else:
        rate = beta * b2 / (2.0 * b2 - mu1 * (1.0 - K * I))
    inf = rate * S * I
    rec = gamma * I
    wan = eta * R
    return [mu2 - inf + wan - mu2 * S, inf - rec - mu2 * I, rec - wan - mu2 * R]


def dopri_run(system, p, t0, y0, t_end, rtol, atol, h, hmax, max_steps, errold, clamp):
    """Advance from ``t0`` towards ``t_end`` for at most ``max_steps`` accepted steps.

    Returns ``(status, ts, ys, dense, n_acc, n_rej, h_next, errold)`` with
    status 0 (reached t_end), 1 (step budget for this call used up) or
    2 (step size underflow). ``dense[i]`` holds the five quartic
    interpolation coefficients of step ``i``.
    """
    system = int(system)
    n = DIMENSION[system]
    p = [float(v) for v in p]
    y = [float(v) for v in y0]
    t = float(t0)
    h = min(float(h), float(hmax), float(t_end) - t)
    ts = np.empty(max_steps)
    ys = np.empty((max_steps, n))
    dense = np.empty((max_steps, 5, n))
    n_acc = n_rej = 0
    status = 0
    reject = False
    rng = range(n)
    k1 = rhs(system, p, y)
    h_next = h
    while t < t_end:
        if n_acc >= max_steps:
            status = 1
            break
        if abs(h) <= 10.0 * UROUND * max(abs(t), 1.0):
            status = 2
            break
        last = False
        if t + 1.01 * h >= t_end:
            h = t_end - t
            last = True
        yt = [y[i] + h * A21 * k1[i] for i in rng]
        k2 = rhs(system, p, yt)
        yt = [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in rng]
        k3 = rhs(system, p, yt)
        yt = [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in rng]
        k4 = rhs(system, p, yt)
        yt = [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in rng]
        k5 = rhs(system, p, yt)
        yt = [y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]) for i in rng]
        k6 = rhs(system, p, yt)
        y1 = [y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]) for i in rng]
        k7 = rhs(system, p, y1)
        err = 0.0
        for i in rng:
            sk = atol + rtol * max(abs(y[i]), abs(y1[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]) / sk
            err += e * e
        err = math.sqrt(err / n)
        if not err < 1e300:
            err = 1e300  # nan/inf: force a maximal step reduction
        negative = clamp and any(v < -atol for v in y1)
        if err <= 1.0 and not negative:
            fac11 = err ** EXPO1
            fac = fac11 / errold ** BETA
            fac = max(FACC2, min(FACC1, fac / SAFE))
            hnew = h / fac
            errold = max(err, 1.0e-4)
            if clamp and any(v < 0.0 for v in y1):
                y1 = [0.0 if v < 0.0 else v for v in y1]
                k7 = rhs(system, p, y1)
            row = dense[n_acc]
            for i in rng:
                ydiff = y1[i] - y[i]
                bspl = h * k1[i] - ydiff
                row[0, i] = y[i]
                row[1, i] = ydiff
                row[2, i] = bspl
                row[3, i] = ydiff - h * k7[i] - bspl
                row[4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            t = t_end if last else t + h
            y = y1
            k1 = k7
            ts[n_acc] = t
            ys[n_acc] = y
            n_acc += 1
            hnew = min(hnew, hmax)
            if reject:
                hnew = min(hnew, h)
            reject = False
            h_next = hnew
            h = hnew
        else:
            if negative and err <= 1.0:
                hnew = 0.5 * h
            else:
                hnew = h / min(FACC1, err ** EXPO1 / SAFE)
            reject = True
            n_rej += 1
            h = hnew
            h_next = h
    return status, ts[:n_acc].copy(), ys[:n_acc].copy(), dense[:n_acc].copy(), n_acc, n_rej, h_next, errold
