"""Pure numpy twin of the compiled leapfrog kernel (same signature, same arithmetic order)."""
import numpy as np


def leapfrog_step(u_new, u0, u1, u2, v_new, v0, v1, v2, fu, fv, c, dx, dt,
                  i0, i1, j0, j1, jlo, jhi, forced, num_threads=1):
    if i1 <= i0 or j1 <= j0:
        return 0.0
    inv2dt = 1.0 / (2.0 * dt)
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / (dx * dx)
    dt2 = dt * dt
    A0, A1, A2, R = c[0], c[1], c[2], c[3]
    Q00, Q01, Q02, Q11, Q12, Q22 = c[4:10]
    P00, P01, P02, P11, P12, P22 = c[10:16]

    I = slice(i0, i1)
    J = slice(j0, j1)
    Ip, Im = slice(i0 + 1, i1 + 1), slice(i0 - 1, i1 - 1)
    Jp, Jm = slice(j0 + 1, j1 + 1), slice(j0 - 1, j1 - 1)

    uc = u0[I, J]
    ut = (3.0 * uc - 4.0 * u1[I, J] + u2[I, J]) * inv2dt
    ux = (u0[Ip, J] - u0[Im, J]) * inv2dx
    uy = (u0[I, Jp] - u0[I, Jm]) * inv2dx
    lapu = (u0[Ip, J] + u0[Im, J] + u0[I, Jp] + u0[I, Jm] - 4.0 * uc) * invdx2
    vv = v0[I, J]
    vt = (3.0 * vv - 4.0 * v1[I, J] + v2[I, J]) * inv2dt
    vx = (v0[Ip, J] - v0[Im, J]) * inv2dx
    vy = (v0[I, Jp] - v0[I, Jm]) * inv2dx
    lapv = (v0[Ip, J] + v0[Im, J] + v0[I, Jp] + v0[I, Jm] - 4.0 * vv) * invdx2

    su = vv * (A0 * vt + A1 * vx + A2 * vy + R * vv) + (
        Q00 * vt * vt + Q11 * vx * vx + Q22 * vy * vy
        + 2.0 * (Q01 * vt * vx + Q02 * vt * vy + Q12 * vx * vy))
    sv = (P00 * ut * ut + P11 * ux * ux + P22 * uy * uy
          + 2.0 * (P01 * ut * ux + P02 * ut * uy + P12 * ux * uy))
    if forced:
        gu = lapu + su + fu
        gv = lapv - vv + sv + fv
    else:
        gu = lapu + su
        gv = lapv - vv + sv
    a = 2.0 * uc - u1[I, J] + dt2 * gu
    b = 2.0 * vv - v1[I, J] + dt2 * gv
    cols = np.arange(j0, j1)[None, :]
    rows = np.arange(i0, i1)
    inside = (cols >= np.asarray(jlo)[rows, None]) & (cols < np.asarray(jhi)[rows, None])
    u_new[I, J] = np.where(inside, a, u_new[I, J])
    v_new[I, J] = np.where(inside, b, v_new[I, J])
    if not inside.any():
        return 0.0
    return float(max(np.max(np.abs(a[inside])), np.max(np.abs(b[inside]))))


_W1D = np.array([
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, -0.5, 0.0, 0.5, 0.0],
    [0.0, 1.0, -2.0, 1.0, 0.0],
    [-0.5, 1.0, 0.0, -1.0, 0.5],
])


def stencil_jets(levels, ii, jj, W, dx, kt, k1, k2, num_threads=1):
    """numpy twin of the compiled jet kernel."""
    ii = np.asarray(ii, dtype=np.intp)
    jj = np.asarray(jj, dtype=np.intp)
    off = np.arange(-2, 3)
    pi = ii[:, None, None] + off[None, :, None]
    pj = jj[:, None, None] + off[None, None, :]
    W = np.asarray(W)
    if jj.shape != ii.shape or W.ndim != 3 or W.shape[0] != ii.size or W.shape[2] != len(levels):
        raise ValueError("W must have shape (npts, nderiv + 1, nlev) matching ii, jj and levels")
    if len(kt) and (np.min(kt) < 0 or np.max(kt) >= W.shape[1]):
        raise ValueError("time derivative order exceeds the weights")
    patch = np.stack([np.asarray(lev)[pi, pj] for lev in levels])  # (l, p, 5, 5)
    maxk = int(max(np.max(np.asarray(k1) + np.asarray(k2)), 0)) if len(kt) else 0
    rows = patch @ _W1D[: maxk + 1].T  # (l, p, a, k2)
    out = np.zeros((len(kt), ii.size))
    for q, (a, b, c) in enumerate(zip(kt, k1, k2)):
        spatial = np.einsum("lpa,a->lp", rows[..., c], _W1D[b]) / dx ** (b + c)
        out[q] = np.sum(W[:, a, :].T * spatial, axis=0)
    return out
