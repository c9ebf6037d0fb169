"""Physics inner loop: stem dynamics, finger kinematics, stick-slip contact.

State is kept in flat float64 arrays so the loop compiles under numba; the
layout constants below are the only contract between this module and
``simworld.world``.
"""
import math

import numpy as np

from .._jit import optional_njit

# end-effector block
EE_POS = 0
EE_R = 3
EE_TIME = 12
EE_SIZE = 13

# per-stem block
S_TH = 0
S_OM = 2
S_CONTACT = 4
S_UATT = 5
S_STICK = 6
S_SIDE = 7
S_PEN = 8
S_FN = 9
S_FT = 10
S_USTAR = 11
S_ELL = 12
S_SIZE = 13

# per-stem parameters
P_ANCHOR = 0
P_D0 = 3
P_E1 = 6
P_E2 = 9
P_LEN = 12
P_MASS = 13
P_K1 = 14
P_K3 = 15
P_DAMP = 16
P_RADIUS = 17
P_SIZE = 18

# finger parameters
F_LEN = 0
F_RBASE = 1
F_RTIP = 2
F_CBASE = 3
F_CTIP = 4
F_MUS = 5
F_MUK = 6
F_KT = 7
F_MPOS = 8
F_MROT = 11
F_GRAV = 20
F_SIZE = 21

# per-tick record of the target stem
R_T = 0
R_CONTACT = 1
R_U = 2
R_PEN = 3
R_FN = 4
R_FT = 5
R_STICK = 6
R_TH = 7
R_OM = 9
R_POS = 11
R_ROT = 14
R_SIZE = 23

EV_CONTACT_MADE = 1
EV_CONTACT_LOST = 2
EV_SLIP_STARTED = 4
EV_SLIP_ENDED = 8

NO_ATTACH = -1.0


@optional_njit(cache=True)
def stem_geometry(th0, th1, sp):
    """Stem direction and its partial derivatives w.r.t. the two deflection angles."""
    phi2 = th0 * th0 + th1 * th1
    phi = math.sqrt(phi2)
    if phi < 1e-4:
        s = 1.0 - phi2 / 6.0
        sp_ = -1.0 / 3.0 + phi2 / 30.0
    else:
        s = math.sin(phi) / phi
        sp_ = (phi * math.cos(phi) - math.sin(phi)) / (phi2 * phi)
    c = math.cos(phi)
    d = np.empty(3)
    j0 = np.empty(3)
    j1 = np.empty(3)
    for k in range(3):
        d0 = sp[P_D0 + k]
        e1 = sp[P_E1 + k]
        e2 = sp[P_E2 + k]
        q = th0 * e1 + th1 * e2
        d[k] = c * d0 + s * q
        j0[k] = -s * th0 * d0 + s * e1 + sp_ * th0 * q
        j1[k] = -s * th1 * d0 + s * e2 + sp_ * th1 * q
    return d, j0, j1


@optional_njit(cache=True)
def finger_frame(ee, fp):
    """Finger base point and unit axis in the world frame."""
    base = np.empty(3)
    axis = np.empty(3)
    for i in range(3):
        acc = ee[EE_POS + i]
        for k in range(3):
            acc += ee[EE_R + 3 * i + k] * fp[F_MPOS + k]
        base[i] = acc
        # first column of R_ee @ R_mount
        a = 0.0
        for k in range(3):
            a += ee[EE_R + 3 * i + k] * fp[F_MROT + 3 * k]
        axis[i] = a
    n = math.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    for i in range(3):
        axis[i] /= n
    return base, axis


@optional_njit(cache=True)
def _advance_ee(ee, twist, dt):
    for i in range(3):
        ee[EE_POS + i] += twist[i] * dt
    wx = twist[3] * dt
    wy = twist[4] * dt
    wz = twist[5] * dt
    th = math.sqrt(wx * wx + wy * wy + wz * wz)
    if th == 0.0:
        return
    kx = wx / th
    ky = wy / th
    kz = wz / th
    c = math.cos(th)
    s = math.sin(th)
    v = 1.0 - c
    d = np.empty(9)
    d[0] = c + kx * kx * v
    d[1] = kx * ky * v - kz * s
    d[2] = kx * kz * v + ky * s
    d[3] = ky * kx * v + kz * s
    d[4] = c + ky * ky * v
    d[5] = ky * kz * v - kx * s
    d[6] = kz * kx * v - ky * s
    d[7] = kz * ky * v + kx * s
    d[8] = c + kz * kz * v
    r = np.empty(9)
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += d[3 * i + k] * ee[EE_R + 3 * k + j]
            r[3 * i + j] = acc
    for i in range(9):
        ee[EE_R + i] = r[i]


@optional_njit(cache=True)
def _clear_contact(st):
    st[S_CONTACT] = 0.0
    st[S_UATT] = NO_ATTACH
    st[S_STICK] = 0.0
    st[S_PEN] = 0.0
    st[S_FN] = 0.0
    st[S_FT] = 0.0


@optional_njit(cache=True)
def resolve_contact(st, sp, fp, base, axis, d):
    """Update one stem's contact block in place; returns event flags."""
    events = 0
    flen = fp[F_LEN]
    w0x = sp[P_ANCHOR] - base[0]
    w0y = sp[P_ANCHOR + 1] - base[1]
    w0z = sp[P_ANCHOR + 2] - base[2]
    bb = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2]
    dd = d[0] * w0x + d[1] * w0y + d[2] * w0z
    ee_ = axis[0] * w0x + axis[1] * w0y + axis[2] * w0z
    den = 1.0 - bb * bb
    was = st[S_CONTACT] > 0.5
    if den < 1e-9:
        if was:
            events |= EV_CONTACT_LOST
        _clear_contact(st)
        return events
    ell = (bb * ee_ - dd) / den
    s = (ee_ - bb * dd) / den
    ustar = s / flen
    nx = d[1] * axis[2] - d[2] * axis[1]
    ny = d[2] * axis[0] - d[0] * axis[2]
    nz = d[0] * axis[1] - d[1] * axis[0]
    nn = math.sqrt(den)
    nx /= nn
    ny /= nn
    nz /= nn
    wx = w0x + ell * d[0] - s * axis[0]
    wy = w0y + ell * d[1] - s * axis[1]
    wz = w0z + ell * d[2] - s * axis[2]
    rho = wx * nx + wy * ny + wz * nz
    uc = min(max(ustar, 0.0), 1.0)
    rf = fp[F_RBASE] + (fp[F_RTIP] - fp[F_RBASE]) * uc
    comp = fp[F_CBASE] + (fp[F_CTIP] - fp[F_CBASE]) * uc
    reach = rf + sp[P_RADIUS]
    st[S_USTAR] = ustar
    st[S_ELL] = ell
    on_stem = ell >= 0.0 and ell <= sp[P_LEN]
    if not was:
        side = 1.0 if rho >= 0.0 else -1.0
        if reach - abs(rho) > 0.0 and ustar >= 0.0 and ustar <= 1.0 and on_stem:
            st[S_CONTACT] = 1.0
            st[S_UATT] = ustar
            st[S_STICK] = 1.0
            st[S_SIDE] = side
            events |= EV_CONTACT_MADE
        else:
            st[S_SIDE] = side
            return events
    delta = reach - st[S_SIDE] * rho
    if delta <= 0.0 or not on_stem:
        _clear_contact(st)
        return events | EV_CONTACT_LOST
    fn = delta / comp
    kt = fp[F_KT] * flen
    trial = -kt * (ustar - st[S_UATT])
    if st[S_STICK] > 0.5:
        limit = fp[F_MUS] * fn
    else:
        limit = fp[F_MUK] * fn
    if abs(trial) <= limit:
        ft = trial
        if st[S_STICK] < 0.5:
            st[S_STICK] = 1.0
            events |= EV_SLIP_ENDED
    else:
        sgn = 1.0 if ustar > st[S_UATT] else -1.0
        st[S_UATT] = ustar - sgn * fp[F_MUK] * fn / kt
        ft = -sgn * fp[F_MUK] * fn
        if st[S_STICK] > 0.5:
            st[S_STICK] = 0.0
            events |= EV_SLIP_STARTED
    if st[S_UATT] < 0.0 or st[S_UATT] > 1.0:
        _clear_contact(st)
        return events | EV_CONTACT_LOST
    st[S_PEN] = delta
    st[S_FN] = fn
    st[S_FT] = ft
    return events


@optional_njit(cache=True)
def advance(ee, stems, sparams, fp, twist, dt, nsteps, rec, events):
    """Run ``nsteps`` semi-implicit Euler steps in place.

    Returns 0 on success, otherwise ``1 + 10 * stem + field`` where field is 0
    for deflection and 1 for angular velocity (``-1`` for the end effector).
    """
    nst = stems.shape[0]
    grav = fp[F_GRAV]
    for it in range(nsteps):
        _advance_ee(ee, twist, dt)
        base, axis = finger_frame(ee, fp)
        for j in range(nst):
            st = stems[j]
            sp = sparams[j]
            th0 = st[S_TH]
            th1 = st[S_TH + 1]
            d, j0, j1 = stem_geometry(th0, th1, sp)
            ev = resolve_contact(st, sp, fp, base, axis, d)
            events[it, j] = ev
            L = sp[P_LEN]
            m = sp[P_MASS]
            inertia = m * L * L
            phi2 = th0 * th0 + th1 * th1
            kk = sp[P_K1] + sp[P_K3] * phi2
            # gravity acts along -z on the tip mass
            t0 = -kk * th0 - sp[P_DAMP] * st[S_OM] - m * L * grav * j0[2]
            t1 = -kk * th1 - sp[P_DAMP] * st[S_OM + 1] - m * L * grav * j1[2]
            if st[S_CONTACT] > 0.5:
                fn = st[S_FN] * st[S_SIDE]
                ft = st[S_FT]
                nx = d[1] * axis[2] - d[2] * axis[1]
                ny = d[2] * axis[0] - d[0] * axis[2]
                nz = d[0] * axis[1] - d[1] * axis[0]
                nn = math.sqrt(nx * nx + ny * ny + nz * nz)
                fx = fn * nx / nn + ft * axis[0]
                fy = fn * ny / nn + ft * axis[1]
                fz = fn * nz / nn + ft * axis[2]
                ell = st[S_ELL]
                t0 += ell * (fx * j0[0] + fy * j0[1] + fz * j0[2])
                t1 += ell * (fx * j1[0] + fy * j1[1] + fz * j1[2])
            st[S_OM] += dt * t0 / inertia
            st[S_OM + 1] += dt * t1 / inertia
            st[S_TH] += dt * st[S_OM]
            st[S_TH + 1] += dt * st[S_OM + 1]
            if not (math.isfinite(st[S_TH]) and math.isfinite(st[S_TH + 1])):
                return 1 + 10 * j
            if not (math.isfinite(st[S_OM]) and math.isfinite(st[S_OM + 1])):
                return 2 + 10 * j
        ee[EE_TIME] += dt
        for i in range(3):
            if not math.isfinite(ee[EE_POS + i]):
                return -1
        t = stems[0]
        rec[it, R_T] = ee[EE_TIME]
        rec[it, R_CONTACT] = t[S_CONTACT]
        rec[it, R_U] = t[S_UATT]
        rec[it, R_PEN] = t[S_PEN]
        rec[it, R_FN] = t[S_FN]
        rec[it, R_FT] = t[S_FT]
        rec[it, R_STICK] = t[S_STICK]
        rec[it, R_TH] = t[S_TH]
        rec[it, R_TH + 1] = t[S_TH + 1]
        rec[it, R_OM] = t[S_OM]
        rec[it, R_OM + 1] = t[S_OM + 1]
        for i in range(3):
            rec[it, R_POS + i] = ee[EE_POS + i]
        for i in range(9):
            rec[it, R_ROT + i] = ee[EE_R + i]
    return 0
