"""Compiled inner loops. Kept free of Python objects so numba can jit them."""
import numpy as np
from numba import njit

BLOWUP = 1e6


@njit(cache=True)
def vdp_accel(x1, x2, mu, amp, w2, gain, u):
    return mu * (amp - x1 * x1) * x2 - w2 * x1 + gain * u


@njit(cache=True)
def rk4_vdp(mu, amp, w2, gain, u_half, x1, x2, dt, nsteps):
    """
    Integrate the forced van der Pol oscillator.

    ``u_half`` holds the forcing on the half-step grid (length 2*nsteps + 1).
    Returns (x1 trajectory, x2 trajectory, index of first non-admissible
    sample or -1).
    """
    out1 = np.empty(nsteps + 1)
    out2 = np.empty(nsteps + 1)
    out1[0] = x1
    out2[0] = x2
    h = dt
    for k in range(nsteps):
        ua = u_half[2 * k]
        um = u_half[2 * k + 1]
        ub = u_half[2 * k + 2]
        k11 = x2
        k12 = vdp_accel(x1, x2, mu, amp, w2, gain, ua)
        y1 = x1 + 0.5 * h * k11
        y2 = x2 + 0.5 * h * k12
        k21 = y2
        k22 = vdp_accel(y1, y2, mu, amp, w2, gain, um)
        y1 = x1 + 0.5 * h * k21
        y2 = x2 + 0.5 * h * k22
        k31 = y2
        k32 = vdp_accel(y1, y2, mu, amp, w2, gain, um)
        y1 = x1 + h * k31
        y2 = x2 + h * k32
        k41 = y2
        k42 = vdp_accel(y1, y2, mu, amp, w2, gain, ub)
        x1 = x1 + h / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        x2 = x2 + h / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
        out1[k + 1] = x1
        out2[k + 1] = x2
        if not (abs(x1) <= BLOWUP and abs(x2) <= BLOWUP):
            for j in range(k + 2, nsteps + 1):
                out1[j] = np.nan
                out2[j] = np.nan
            return out1, out2, k + 1
    return out1, out2, -1


@njit(cache=True)
def dlsim(A, B, C, D, u, x0):
    """Discrete SISO simulation y_k = C x_k + D u_k, x_{k+1} = A x_k + B u_k."""
    n = x0.size
    N = u.size
    y = np.empty(N)
    x = x0.copy()
    xn = np.empty(n)
    for k in range(N):
        acc = D * u[k]
        for i in range(n):
            acc += C[i] * x[i]
        y[k] = acc
        for i in range(n):
            s = B[i] * u[k]
            for j in range(n):
                s += A[i, j] * x[j]
            xn[i] = s
        for i in range(n):
            x[i] = xn[i]
    return y, x
