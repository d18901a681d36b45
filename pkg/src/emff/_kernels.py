"""Compiled closed-loop kernels.

These mirror the numpy reference functions in kinematics, constraint,
dynamics and controller one for one; the test suite checks that both paths
agree.  The closed loop evaluates the controller four times per RK4 step,
and the reference path is too slow for the 10^5-step runs the scenarios need.

Every kernel is generic over float64 / complex128 inputs so the controller's
complex-step derivatives compile from the same source.
"""

import numpy as np
from numba import njit

CORR_NONE = 0
CORR_DERIVED = 1
CORR_PRINTED = 2

_CSTEP = 1e-30


@njit(cache=True)
def skew(a):
    out = np.zeros((3, 3), dtype=a.dtype)
    out[0, 1] = -a[2]
    out[0, 2] = a[1]
    out[1, 0] = a[2]
    out[1, 2] = -a[0]
    out[2, 0] = -a[1]
    out[2, 1] = a[0]
    return out


@njit(cache=True)
def _mm(a, b):
    """Small dense product; avoids BLAS call overhead.  Operands share a dtype."""
    r, k = a.shape
    c = b.shape[1]
    out = np.zeros((r, c), dtype=a.dtype)
    for i in range(r):
        for p in range(k):
            aip = a[i, p]
            for j in range(c):
                out[i, j] += aip * b[p, j]
    return out


@njit(cache=True)
def _mv(a, x):
    r, k = a.shape
    out = np.zeros(r, dtype=a.dtype)
    for i in range(r):
        acc = out[i]
        for p in range(k):
            acc += a[i, p] * x[p]
        out[i] = acc
    return out


@njit(cache=True)
def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def mrp_z(s):
    s2 = _dot3(s, s)
    out = 2.0 * skew(s) + 2.0 * np.outer(s, s)
    for i in range(3):
        out[i, i] += 1.0 - s2
    return 0.25 * out


@njit(cache=True)
def mrp_zinv(s):
    s2 = _dot3(s, s)
    return mrp_z(s).T.copy() * (4.0 / (1.0 + s2)) ** 2


@njit(cache=True)
def mrp_zdir(s, d):
    out = 2.0 * skew(d) + 2.0 * (np.outer(d, s) + np.outer(s, d))
    sd = _dot3(s, d)
    for i in range(3):
        out[i, i] -= 2.0 * sd
    return 0.25 * out


@njit(cache=True)
def dcm(s):
    s2 = _dot3(s, s)
    sk = skew(s)
    out = (8.0 * _mm(sk, sk) + 4.0 * (1.0 - s2) * sk) / (1.0 + s2) ** 2
    for i in range(3):
        out[i, i] += 1.0
    return out


@njit(cache=True)
def _rel_positions(q, masses, n):
    """r_j - r_1 for j = 2..n, shape (n-1, 3)."""
    r1 = np.zeros(3, dtype=q.dtype)
    for j in range(1, n):
        r1 -= masses[j] * q[3 * (j - 1):3 * j] / masses[0]
    out = np.zeros((n - 1, 3), dtype=q.dtype)
    for j in range(1, n):
        out[j - 1] = q[3 * (j - 1):3 * j] - r1
    return out


@njit(cache=True)
def momentum_matrix(q, masses, inertias, n):
    k = 3 * (n - 1)
    out = np.zeros((3, 6 * n - 3), dtype=q.dtype)
    rel = _rel_positions(q, masses, n)
    for j in range(n - 1):
        out[:, 3 * j:3 * j + 3] = masses[j + 1] * skew(rel[j])
    for j in range(n):
        c = dcm(q[k + 3 * j:k + 3 * j + 3])
        out[:, k + 3 * j:k + 3 * j + 3] = _mm(c, inertias[j].astype(q.dtype))
    return out


@njit(cache=True)
def momentum_matrix_dir(q, d, masses, inertias, n):
    k = 3 * (n - 1)
    out = np.zeros((3, 6 * n - 3), dtype=q.dtype)
    drel = _rel_positions(d.astype(q.dtype), masses, n)
    for j in range(n - 1):
        out[:, 3 * j:3 * j + 3] = masses[j + 1] * skew(drel[j])
    for j in range(n):
        s = q[k + 3 * j:k + 3 * j + 3]
        w = _mv(mrp_zinv(s), d[k + 3 * j:k + 3 * j + 3].astype(q.dtype))
        out[:, k + 3 * j:k + 3 * j + 3] = _mm(_mm(dcm(s), skew(w)), inertias[j].astype(q.dtype))
    return out


@njit(cache=True)
def nullspace_basis(q, a, jinv_n, n):
    m = 6 * n - 6
    out = np.zeros((6 * n - 3, m), dtype=q.dtype)
    for i in range(m):
        out[i, i] = 1.0
    cnt = dcm(q[6 * n - 6:]).T.copy()
    out[m:, :] = -_mm(_mm(jinv_n.astype(q.dtype), cnt), a[:, :m].copy())
    return out


@njit(cache=True)
def basis_dir(q, d, a, masses, inertias, jinv_n, n):
    m = 6 * n - 6
    da = momentum_matrix_dir(q, d, masses, inertias, n)
    s = q[m:]
    cnt = dcm(s).T.copy()
    w = _mv(mrp_zinv(s), d[m:].astype(q.dtype))
    dcnt = -_mm(skew(w), cnt)
    out = np.zeros((6 * n - 3, m), dtype=q.dtype)
    out[m:, :] = -_mm(jinv_n.astype(q.dtype), _mm(dcnt, a[:, :m].copy()) + _mm(cnt, da[:, :m].copy()))
    return out


@njit(cache=True)
def zhat(q, n):
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3), dtype=q.dtype)
    for i in range(k):
        out[i, i] = 1.0
    for j in range(n):
        a = k + 3 * j
        out[a:a + 3, a:a + 3] = mrp_z(q[a:a + 3])
    return out


@njit(cache=True)
def zhat_dir(q, d, n):
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3), dtype=q.dtype)
    for j in range(n):
        a = k + 3 * j
        out[a:a + 3, a:a + 3] = mrp_zdir(q[a:a + 3], d[a:a + 3].astype(q.dtype))
    return out


@njit(cache=True)
def apply_zhat(q, zeta, n):
    k = 3 * (n - 1)
    out = zeta.copy()
    for j in range(n):
        a = k + 3 * j
        out[a:a + 3] = _mv(mrp_z(q[a:a + 3]), zeta[a:a + 3])
    return out


@njit(cache=True)
def bracket_matrix(q, masses, inertias, jinv_n, pairing, n):
    m = 6 * n - 6
    a = momentum_matrix(q, masses, inertias, n)
    S = nullspace_basis(q, a, jinv_n, n)
    zh = zhat(q, n)
    X = zh @ S
    out = np.zeros((6 * n - 3, 6 * n - 3), dtype=q.dtype)
    out[:, :m] = X
    dX = np.zeros((3, 6 * n - 3, m), dtype=q.dtype)
    for i in range(3):
        d = X[:, i].copy()
        dX[i] = zhat_dir(q, d, n) @ S + zh @ basis_dir(q, d, a, masses, inertias, jinv_n, n)
    for k in range(3):
        ia = pairing[k, 0]
        ib = pairing[k, 1]
        out[:, m + k] = dX[ia][:, ib] - dX[ib][:, ia]
    return out


@njit(cache=True)
def rho_and_grad(err, n, power):
    k = 3 * (n - 1)
    base = 0.0
    g = np.zeros(err.size)
    for i in range(k):
        base += err[i] ** 4
        g[i] = 4.0 * err[i] ** 3
    for i in range(k, err.size):
        base += err[i] ** 2
        g[i] = 2.0 * err[i]
    if base <= 0.0:
        return 0.0, np.zeros(err.size)
    if power == 1.0:
        return base, g
    return base ** power, power * base ** (power - 1.0) * g


@njit(cache=True)
def _geometry_bottom(q, masses, inertias, jinv_n, n):
    """A, the sigma_n rows of S, and the sigma_n rows of X = Zhat S."""
    m = 6 * n - 6
    a = momentum_matrix(q, masses, inertias, n)
    cnt = dcm(q[m:]).T.copy()
    sb = -_mm(_mm(jinv_n.astype(q.dtype), cnt), a[:, :m].copy())
    xb = _mm(mrp_z(q[m:]), sb)
    return a, sb, xb


@njit(cache=True)
def _bracket_block(q, a, sb, xb, masses, inertias, jinv_n, pairing, n):
    """The sigma_n rows of the three bracket columns; all other rows vanish.

    Relies on pairing indices < 3: those fields move r_2 and sigma_n only,
    so the position blocks of dA along them are constant and the attitude
    blocks of satellites 1..n-1 do not move.
    """
    m = 6 * n - 6
    s = q[m:]
    zn = mrp_z(s)
    zinv = mrp_zinv(s)
    cnt = dcm(s).T.copy()
    jn = jinv_n.astype(q.dtype)
    a_s = a[:, :m].copy()
    dxb = np.zeros((3, 3, m), dtype=q.dtype)
    for i in range(3):
        # r_2 moves along e_i, r_1 follows to keep the centre of mass fixed
        da_s = np.zeros((3, m), dtype=q.dtype)
        e = np.zeros(3, dtype=q.dtype)
        e[i] = 1.0
        for j in range(n - 1):
            drel = e * (masses[1] / masses[0])
            if j == 0:
                drel[i] += 1.0
            da_s[:, 3 * j:3 * j + 3] = masses[j + 1] * skew(drel)
        w = _mv(zinv, xb[:, i].copy())
        dcnt = -_mm(skew(w), cnt)
        dsb = -_mm(jn, _mm(dcnt, a_s) + _mm(cnt, da_s))
        dxb[i] = _mm(mrp_zdir(s, xb[:, i].copy()), sb) + _mm(zn, dsb)
    out = np.zeros((3, 3), dtype=q.dtype)
    for k in range(3):
        ia = pairing[k, 0]
        ib = pairing[k, 1]
        for r in range(3):
            out[r, k] = dxb[ia, r, ib] - dxb[ib, r, ia]
    return out


@njit(cache=True)
def _solve_u_tilde(q, target, masses, inertias, jinv_n, pairing, n):
    """Block solve of [X B] u = -(q - target); X's top block is block diagonal."""
    m = 6 * n - 6
    k = 3 * (n - 1)
    a, sb, xb = _geometry_bottom(q, masses, inertias, jinv_n, n)
    bb = _bracket_block(q, a, sb, xb, masses, inertias, jinv_n, pairing, n)
    err = q - target.astype(q.dtype)
    ut = np.zeros(6 * n - 3, dtype=q.dtype)
    for i in range(k):
        ut[i] = -err[i]
    for j in range(n - 1):
        b = k + 3 * j
        ut[b:b + 3] = -_mv(mrp_zinv(q[b:b + 3]), err[b:b + 3].copy())
    rhs = -err[m:] - _mv(xb, ut[:m].copy())
    ut[m:] = np.linalg.solve(bb, rhs)
    return ut, a, xb, bb


@njit(cache=True)
def control(q, v, t, masses, inertias, jinv_n, mass_mat, target, pairing, omega,
            gain, eps, rho_power, rho_min, corr_mode):
    """Returns (u_c, u_tilde, rho, h2, w, u, guard)."""
    n = masses.size
    m = 6 * n - 6
    dq = 6 * n - 3
    ut, a, xb, bb = _solve_u_tilde(q, target, masses, inertias, jinv_n, pairing, n)
    S = nullspace_basis(q, a, jinv_n, n)
    err = q - target
    rho, grad = rho_and_grad(err, n, rho_power)
    guard = rho < rho_min
    h = np.zeros(m)
    v1 = np.zeros(dq)
    v2 = np.zeros(3)
    v1[:m] = ut[:m]
    if not guard:
        if corr_mode != CORR_NONE:
            # fields X_0..X_2 in q-space: unit position entry plus sigma_n rows
            lie_rho = np.zeros(3)
            for i in range(3):
                lie_rho[i] = grad[i] + _dot3(grad[m:], xb[:, i])
            dut = np.zeros((3, 3))
            if corr_mode == CORR_DERIVED:
                for i in range(3):
                    qc = q.astype(np.complex128)
                    qc[i] += 1j * _CSTEP
                    for r in range(3):
                        qc[m + r] += 1j * _CSTEP * xb[r, i]
                    utc = _solve_u_tilde(qc, target, masses, inertias, jinv_n, pairing, n)[0]
                    dut[:, i] = utc[m:].imag / _CSTEP
            for k in range(3):
                ia = pairing[k, 0]
                ib = pairing[k, 1]
                uk = ut[m + k]
                beta = uk / rho
                h[ia] += beta * lie_rho[ib]
                if corr_mode == CORR_DERIVED:
                    l_a_beta = dut[k, ia] / rho - uk * lie_rho[ia] / rho ** 2
                    h[ib] -= rho * l_a_beta
                else:
                    h[ib] -= rho * lie_rho[ia]
        for i in range(m):
            v1[i] += h[i]
        for k in range(3):
            v1[m + k] = rho
            v2[k] = ut[m + k] / rho
    amp = eps ** -0.5
    w = v1[:m].copy()
    for k in range(3):
        ph = omega[k] * t / eps
        w[pairing[k, 0]] += amp * np.cos(ph) * v1[m + k]
        w[pairing[k, 1]] += 2.0 * omega[k] * amp * np.sin(ph) * v2[k]
    u = -gain * (v - w)
    u_c = _mv(mass_mat, _mv(S, u))
    return u_c, ut, rho, h, w, u, guard


@njit(cache=True)
def reduced_accel(q, v, u_c, masses, inertias, jinv_n, mass_mat):
    """(q_dot, v_dot), exploiting S = [E; S_b] so only the sigma_n rows are dense."""
    n = masses.size
    m = 6 * n - 6
    k = 3 * (n - 1)
    a, sb, _ = _geometry_bottom(q, masses, inertias, jinv_n, n)
    zeta = np.empty(6 * n - 3)
    zeta[:m] = v
    zeta[m:] = _mv(sb, v)
    qd = apply_zhat(q, zeta, n)
    # rate of S_b along the motion
    s = q[m:]
    da = momentum_matrix_dir(q, qd, masses, inertias, n)
    cnt = dcm(s).T.copy()
    w = zeta[m:]
    dcnt = -_mm(skew(w), cnt)
    sb_dot = -_mm(jinv_n, _mm(dcnt, a[:, :m].copy()) + _mm(cnt, da[:, :m].copy()))
    jn = inertias[n - 1]
    cbv = np.zeros(m)
    for j in range(n - 1):
        b = k + 3 * j
        wj = v[b:b + 3]
        cbv[b:b + 3] = -np.cross(_mv(inertias[j], wj), wj)
    sbt = sb.T.copy()
    cbv += _mv(sbt, _mv(jn, _mv(sb_dot, v)) - np.cross(_mv(jn, w), w))
    m_bar = mass_mat[:m, :m] + _mm(sbt, _mm(jn, sb))
    rhs = -cbv + u_c[:m] + _mv(sbt, u_c[m:])
    return qd, np.linalg.solve(m_bar, rhs)


@njit(cache=True)
def rk4_step(q, v, t, dt, masses, inertias, jinv_n, mass_mat, target, pairing, omega,
             gain, eps, rho_power, rho_min, corr_mode):
    """One RK4 step of the closed loop with the controller evaluated per stage."""
    u1 = control(q, v, t, masses, inertias, jinv_n, mass_mat, target, pairing, omega,
                 gain, eps, rho_power, rho_min, corr_mode)[0]
    k1q, k1v = reduced_accel(q, v, u1, masses, inertias, jinv_n, mass_mat)
    q2 = q + 0.5 * dt * k1q
    v2 = v + 0.5 * dt * k1v
    u2 = control(q2, v2, t + 0.5 * dt, masses, inertias, jinv_n, mass_mat, target, pairing,
                 omega, gain, eps, rho_power, rho_min, corr_mode)[0]
    k2q, k2v = reduced_accel(q2, v2, u2, masses, inertias, jinv_n, mass_mat)
    q3 = q + 0.5 * dt * k2q
    v3 = v + 0.5 * dt * k2v
    u3 = control(q3, v3, t + 0.5 * dt, masses, inertias, jinv_n, mass_mat, target, pairing,
                 omega, gain, eps, rho_power, rho_min, corr_mode)[0]
    k3q, k3v = reduced_accel(q3, v3, u3, masses, inertias, jinv_n, mass_mat)
    q4 = q + dt * k3q
    v4 = v + dt * k3v
    u4 = control(q4, v4, t + dt, masses, inertias, jinv_n, mass_mat, target, pairing,
                 omega, gain, eps, rho_power, rho_min, corr_mode)[0]
    k4q, k4v = reduced_accel(q4, v4, u4, masses, inertias, jinv_n, mass_mat)
    return (q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


@njit(cache=True)
def rk4_step_held(q, v, dt, u_c, masses, inertias, jinv_n, mass_mat):
    """One RK4 step with u_c held constant over the step."""
    k1q, k1v = reduced_accel(q, v, u_c, masses, inertias, jinv_n, mass_mat)
    k2q, k2v = reduced_accel(q + 0.5 * dt * k1q, v + 0.5 * dt * k1v, u_c,
                             masses, inertias, jinv_n, mass_mat)
    k3q, k3v = reduced_accel(q + 0.5 * dt * k2q, v + 0.5 * dt * k2v, u_c,
                             masses, inertias, jinv_n, mass_mat)
    k4q, k4v = reduced_accel(q + dt * k3q, v + dt * k3v, u_c,
                             masses, inertias, jinv_n, mass_mat)
    return (q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))
