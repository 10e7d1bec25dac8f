"""Hot numeric kernels: 500 Hz bilateral stepping and LSTM sequence math.

The simulation kernels are single-source: scalar-style code that numba
compiles when the backend is enabled and that still runs (slower) as plain
python.  The LSTM layer kernels additionally have vectorized numpy fallbacks
because the fused per-element loops are only viable compiled; the two
variants implement identical formulas and are cross-checked in the tests.

Conventions used throughout:
  * joint layout is [shoulder, elbow, pen]; the pen joint is prismatic,
  * per-joint plant:  J*acc = tau_applied + tau_ext - b*vel,
  * one-pole filters use the exact exponential coefficient a = exp(-g*dt),
  * state vectors are [theta(3), vel(3), tau_hat(3)].
"""

import math

import numpy as np

from .backend import USE_NUMBA, jit

# ---------------------------------------------------------------------------
# scalar plant/controller helpers (shared by the demo and rollout kernels)


@jit
def lpf_step(y, x, a):
    return a * y + (1.0 - a) * x


@jit
def pen_tip(q1, q2, q3, l1, l2):
    x = l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
    y = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
    return x, y, q3


@jit
def planar_jacobian(q1, q2, l1, l2):
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    s12 = math.sin(q1 + q2)
    c12 = math.cos(q1 + q2)
    j11 = -l1 * s1 - l2 * s12
    j12 = -l2 * s12
    j21 = l1 * c1 + l2 * c12
    j22 = l2 * c12
    return j11, j12, j21, j22


@jit
def contact_normal_force(z, zdot, stiffness, damping):
    """Board reaction along +z; zero outside penetration, never adhesive."""
    if z >= 0.0:
        return 0.0
    f = stiffness * (-z) - damping * zdot
    if f < 0.0:
        return 0.0
    return f


@jit
def integrate_joint(q, v, tau, tau_ext, jn, fric, dt):
    """Semi-implicit Euler step of one decoupled joint."""
    v2 = v + dt * (tau + tau_ext - fric * v) / jn
    return q + dt * v2, v2


@jit
def observers_update(q, qprev, vest, doby, rfoy, tcmd_prev, tdis, text,
                     jn, fric, dt, a_v, a_d, a_r, g_d):
    """Per-sample update of one arm's velocity and torque observers.

    Velocity is a low-passed finite difference (band-limited differentiator),
    the disturbance observer reconstructs the lumped torque the command has
    to overcome, and the reaction estimate subtracts the low-passed modeled
    friction so that free motion reads near zero.  All arrays are length 3
    and updated in place; tdis/text receive this sample's estimates.
    """
    for j in range(3):
        d = (q[j] - qprev[j]) / dt
        vest[j] = a_v * vest[j] + (1.0 - a_v) * d
        qprev[j] = q[j]
        gjv = g_d * jn[j] * vest[j]
        doby[j] = a_d * doby[j] + (1.0 - a_d) * (tcmd_prev[j] + gjv)
        tdis[j] = doby[j] - gjv
        rfoy[j] = a_r * rfoy[j] + (1.0 - a_r) * (fric[j] * vest[j])
        text[j] = tdis[j] - rfoy[j]


@jit
def bilateral_accels(dq, dv, tsum, kp, kd, kf):
    """Acceleration references for (follower, leader) on one joint.

    dq/dv are leader-minus-follower differences; the position servo is
    antisymmetric while the force servo drives the reaction sum toward zero
    on both sides with the same sign.
    """
    p = kp * dq + kd * dv
    f = -0.5 * kf * tsum
    return 0.5 * p + f, -0.5 * p + f


@jit
def hand_wrench(px, py, pz, press, pen_down, q1, q2, q3, v1, v2, v3,
                l1, l2, kh_xy, dh_xy, kh_z, dh_z):
    """Joint torques exerted by the scripted hand holding the leader pen.

    In-plane: impedance pulling the tip toward (px, py), mapped through the
    Jacobian transpose.  Pen axis: a commanded press force while the pen is
    down, otherwise an impedance toward the lift height pz.
    """
    x, y, z = pen_tip(q1, q2, q3, l1, l2)
    j11, j12, j21, j22 = planar_jacobian(q1, q2, l1, l2)
    vx = j11 * v1 + j12 * v2
    vy = j21 * v1 + j22 * v2
    fx = kh_xy * (px - x) - dh_xy * vx
    fy = kh_xy * (py - y) - dh_xy * vy
    if pen_down != 0:
        # pressing hands still damp vertical motion; without this term the
        # contact force loop rings at sqrt(kf*k_board/2) nearly undamped
        fz = -press - dh_z * v3
    else:
        fz = kh_z * (pz - z) - dh_z * v3
    return j11 * fx + j21 * fy, j12 * fx + j22 * fy, fz


# ---------------------------------------------------------------------------
# demonstration episode kernel (leader driven by the hand, follower writing)


@jit
def demo_episode(dt, l1, l2, jn, fric, kp, kd, kf,
                 a_v, a_d, a_r, g_d,
                 kh_xy, dh_xy, kh_z, dh_z,
                 k_board, d_board, ink_thr,
                 pdes, press, pen_down, q0,
                 out_f, out_l, out_ink, out_flag):
    """Run one full bilateral demonstration; logs one row per 2 ms sample.

    Each sample: observer update on both arms, state logging, bilateral
    control law, external torques (hand on the leader, board contact on the
    follower), then integration.  Returns -1 on success or the index of the
    first sample at which the plant left its sane envelope.
    """
    n = pdes.shape[0]
    qf = q0.copy()
    ql = q0.copy()
    vf = np.zeros(3)
    vl = np.zeros(3)
    qprev_f = q0.copy()
    qprev_l = q0.copy()
    vest_f = np.zeros(3)
    vest_l = np.zeros(3)
    doby_f = np.zeros(3)
    doby_l = np.zeros(3)
    rfoy_f = np.zeros(3)
    rfoy_l = np.zeros(3)
    tcp_f = np.zeros(3)
    tcp_l = np.zeros(3)
    tdis_f = np.zeros(3)
    tdis_l = np.zeros(3)
    text_f = np.zeros(3)
    text_l = np.zeros(3)
    tcmd_f = np.zeros(3)
    tcmd_l = np.zeros(3)

    for k in range(n):
        observers_update(qf, qprev_f, vest_f, doby_f, rfoy_f, tcp_f,
                         tdis_f, text_f, jn, fric, dt, a_v, a_d, a_r, g_d)
        observers_update(ql, qprev_l, vest_l, doby_l, rfoy_l, tcp_l,
                         tdis_l, text_l, jn, fric, dt, a_v, a_d, a_r, g_d)
        for j in range(3):
            out_f[k, j] = qf[j]
            out_f[k, 3 + j] = vest_f[j]
            out_f[k, 6 + j] = text_f[j]
            out_l[k, j] = ql[j]
            out_l[k, 3 + j] = vest_l[j]
            out_l[k, 6 + j] = text_l[j]

        for j in range(3):
            a_fo, a_le = bilateral_accels(ql[j] - qf[j], vest_l[j] - vest_f[j],
                                          text_l[j] + text_f[j],
                                          kp[j], kd[j], kf[j])
            tcmd_f[j] = jn[j] * a_fo + tdis_f[j]
            tcmd_l[j] = jn[j] * a_le + tdis_l[j]

        h1, h2, h3 = hand_wrench(pdes[k, 0], pdes[k, 1], pdes[k, 2],
                                 press[k], pen_down[k],
                                 ql[0], ql[1], ql[2], vl[0], vl[1], vl[2],
                                 l1, l2, kh_xy, dh_xy, kh_z, dh_z)

        fn = contact_normal_force(qf[2], vf[2], k_board, d_board)
        tx, ty, _ = pen_tip(qf[0], qf[1], qf[2], l1, l2)
        out_ink[k, 0] = tx
        out_ink[k, 1] = ty
        out_ink[k, 2] = fn
        out_flag[k] = 1 if fn > ink_thr else 0

        qf[0], vf[0] = integrate_joint(qf[0], vf[0], tcmd_f[0], 0.0,
                                       jn[0], fric[0], dt)
        qf[1], vf[1] = integrate_joint(qf[1], vf[1], tcmd_f[1], 0.0,
                                       jn[1], fric[1], dt)
        qf[2], vf[2] = integrate_joint(qf[2], vf[2], tcmd_f[2], fn,
                                       jn[2], fric[2], dt)
        ql[0], vl[0] = integrate_joint(ql[0], vl[0], tcmd_l[0], h1,
                                       jn[0], fric[0], dt)
        ql[1], vl[1] = integrate_joint(ql[1], vl[1], tcmd_l[1], h2,
                                       jn[1], fric[1], dt)
        ql[2], vl[2] = integrate_joint(ql[2], vl[2], tcmd_l[2], h3,
                                       jn[2], fric[2], dt)
        for j in range(3):
            tcp_f[j] = tcmd_f[j]
            tcp_l[j] = tcmd_l[j]
        for j in range(3):
            if not (math.isfinite(qf[j]) and math.isfinite(ql[j])):
                return k
            if abs(qf[j]) > 50.0 or abs(ql[j]) > 50.0:
                return k
    return -1


# ---------------------------------------------------------------------------
# autonomous follower kernels (leader replaced by a held network command)
#
# The caller alternates follower_measure (observer update + one logged row,
# the sample a network step consumes) with follower_advance (ten control and
# integration steps, logging the nine intermediate samples).  The sequence
# of per-sample operations is identical to demo_episode.


@jit
def follower_measure(q, v, qprev, vest, doby, rfoy, tcp, tdis, text,
                     jn, fric, dt, a_v, a_d, a_r, g_d,
                     l1, l2, k_board, d_board, ink_thr,
                     out_f, out_ink, out_flag, row):
    observers_update(q, qprev, vest, doby, rfoy, tcp,
                     tdis, text, jn, fric, dt, a_v, a_d, a_r, g_d)
    for j in range(3):
        out_f[row, j] = q[j]
        out_f[row, 3 + j] = vest[j]
        out_f[row, 6 + j] = text[j]
    fn = contact_normal_force(q[2], v[2], k_board, d_board)
    tx, ty, _ = pen_tip(q[0], q[1], q[2], l1, l2)
    out_ink[row, 0] = tx
    out_ink[row, 1] = ty
    out_ink[row, 2] = fn
    out_flag[row] = 1 if fn > ink_thr else 0


@jit
def follower_advance(q, v, qprev, vest, doby, rfoy, tcp, tdis, text,
                     ql_cmd, vl_cmd, tl_cmd,
                     jn, fric, kp, kd, kf, dt, a_v, a_d, a_r, g_d,
                     l1, l2, k_board, d_board, ink_thr,
                     out_f, out_ink, out_flag, row0, nsub):
    """Advance nsub control steps under a zero-order-held leader command.

    Assumes follower_measure already produced the observer state and log row
    for row0; rows row0+1 .. row0+nsub-1 are logged here.  Returns -1 or the
    sub-step at which the plant diverged.
    """
    for s in range(nsub):
        if s > 0:
            observers_update(q, qprev, vest, doby, rfoy, tcp,
                             tdis, text, jn, fric, dt, a_v, a_d, a_r, g_d)
            row = row0 + s
            for j in range(3):
                out_f[row, j] = q[j]
                out_f[row, 3 + j] = vest[j]
                out_f[row, 6 + j] = text[j]
            fn0 = contact_normal_force(q[2], v[2], k_board, d_board)
            tx, ty, _ = pen_tip(q[0], q[1], q[2], l1, l2)
            out_ink[row, 0] = tx
            out_ink[row, 1] = ty
            out_ink[row, 2] = fn0
            out_flag[row] = 1 if fn0 > ink_thr else 0
        fn = contact_normal_force(q[2], v[2], k_board, d_board)
        for j in range(3):
            a_fo, _ = bilateral_accels(ql_cmd[j] - q[j], vl_cmd[j] - vest[j],
                                       tl_cmd[j] + text[j],
                                       kp[j], kd[j], kf[j])
            tau = jn[j] * a_fo + tdis[j]
            ext = fn if j == 2 else 0.0
            q[j], v[j] = integrate_joint(q[j], v[j], tau, ext,
                                         jn[j], fric[j], dt)
            tcp[j] = tau
        for j in range(3):
            if not math.isfinite(q[j]) or abs(q[j]) > 50.0:
                return s
    return -1


# ---------------------------------------------------------------------------
# LSTM layer kernels
#
# pre holds the input projection x_t @ Wx for the whole sequence (bias not
# yet added); the kernels run the recurrence and fill the caches used by
# backprop: A = activated gates (i|f|g|o), C = cell state, TC = tanh(C),
# H = hidden output.  Gate order within the width-4H axis is i, f, g, o.


def _lstm_layer_forward_numba(pre, wh, b, ga, cs, tc, hs):
    T, B, H4 = pre.shape
    H = H4 // 4
    for t in range(T):
        if t == 0:
            hz = np.zeros((B, H4))
        else:
            hz = np.dot(hs[t - 1], wh)
        for bi in range(B):
            for u in range(H):
                zi = pre[t, bi, u] + hz[bi, u] + b[u]
                zf = pre[t, bi, H + u] + hz[bi, H + u] + b[H + u]
                zg = pre[t, bi, 2 * H + u] + hz[bi, 2 * H + u] + b[2 * H + u]
                zo = pre[t, bi, 3 * H + u] + hz[bi, 3 * H + u] + b[3 * H + u]
                ig = 1.0 / (1.0 + math.exp(-zi))
                fg = 1.0 / (1.0 + math.exp(-zf))
                gg = math.tanh(zg)
                og = 1.0 / (1.0 + math.exp(-zo))
                cprev = cs[t - 1, bi, u] if t > 0 else 0.0
                cc = fg * cprev + ig * gg
                tcv = math.tanh(cc)
                ga[t, bi, u] = ig
                ga[t, bi, H + u] = fg
                ga[t, bi, 2 * H + u] = gg
                ga[t, bi, 3 * H + u] = og
                cs[t, bi, u] = cc
                tc[t, bi, u] = tcv
                hs[t, bi, u] = og * tcv


def _lstm_layer_backward_numba(ga, cs, tc, wh, dh_ext, dpre):
    T, B, H4 = dpre.shape
    H = H4 // 4
    dh_carry = np.zeros((B, H))
    dc_carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for bi in range(B):
            for u in range(H):
                dh = dh_ext[t, bi, u] + dh_carry[bi, u]
                ig = ga[t, bi, u]
                fg = ga[t, bi, H + u]
                gg = ga[t, bi, 2 * H + u]
                og = ga[t, bi, 3 * H + u]
                tcv = tc[t, bi, u]
                do = dh * tcv
                dc = dh * og * (1.0 - tcv * tcv) + dc_carry[bi, u]
                cprev = cs[t - 1, bi, u] if t > 0 else 0.0
                dpre[t, bi, u] = dc * gg * ig * (1.0 - ig)
                dpre[t, bi, H + u] = dc * cprev * fg * (1.0 - fg)
                dpre[t, bi, 2 * H + u] = dc * ig * (1.0 - gg * gg)
                dpre[t, bi, 3 * H + u] = do * og * (1.0 - og)
                dc_carry[bi, u] = dc * fg
        dh_carry = np.dot(dpre[t], wh.T)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _lstm_layer_forward_numpy(pre, wh, b, ga, cs, tc, hs):
    T, B, H4 = pre.shape
    H = H4 // 4
    hprev = np.zeros((B, H))
    cprev = np.zeros((B, H))
    for t in range(T):
        z = pre[t] + hprev @ wh + b
        ig = _sigmoid(z[:, :H])
        fg = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        og = _sigmoid(z[:, 3 * H:])
        cc = fg * cprev + ig * gg
        tcv = np.tanh(cc)
        ga[t, :, :H] = ig
        ga[t, :, H:2 * H] = fg
        ga[t, :, 2 * H:3 * H] = gg
        ga[t, :, 3 * H:] = og
        cs[t] = cc
        tc[t] = tcv
        hs[t] = og * tcv
        hprev = hs[t]
        cprev = cc


def _lstm_layer_backward_numpy(ga, cs, tc, wh, dh_ext, dpre):
    T, B, H4 = dpre.shape
    H = H4 // 4
    dh_carry = np.zeros((B, H))
    dc_carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh_ext[t] + dh_carry
        ig = ga[t, :, :H]
        fg = ga[t, :, H:2 * H]
        gg = ga[t, :, 2 * H:3 * H]
        og = ga[t, :, 3 * H:]
        tcv = tc[t]
        do = dh * tcv
        dc = dh * og * (1.0 - tcv * tcv) + dc_carry
        cprev = cs[t - 1] if t > 0 else np.zeros((B, H))
        dpre[t, :, :H] = dc * gg * ig * (1.0 - ig)
        dpre[t, :, H:2 * H] = dc * cprev * fg * (1.0 - fg)
        dpre[t, :, 2 * H:3 * H] = dc * ig * (1.0 - gg * gg)
        dpre[t, :, 3 * H:] = do * og * (1.0 - og)
        dc_carry = dc * fg
        dh_carry = dpre[t] @ wh.T


if USE_NUMBA:
    lstm_layer_forward = jit(_lstm_layer_forward_numba)
    lstm_layer_backward = jit(_lstm_layer_backward_numba)
else:
    lstm_layer_forward = _lstm_layer_forward_numpy
    lstm_layer_backward = _lstm_layer_backward_numpy
