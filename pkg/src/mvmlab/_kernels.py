"""Hot loops, each with a compiled and a vectorised numpy implementation.

The public names at the bottom of this module dispatch between the two
through :func:`mvmlab._accel.accelerated`.
"""

from __future__ import annotations

import numpy as np

from ._accel import accelerated, njit

NEVER = np.iinfo(np.int64).max


# projected SOR for one implicit Euler step of u_t = u_xx / 2 above an obstacle
@njit
def _psor_advance_nb(u, obst, a, omega, tol, max_sweeps, n_steps, first_step, r_steps, contact_tol):
    n = u.size
    diag = 1.0 + 2.0 * a
    rhs = np.empty(n)
    sweeps = 0
    for s in range(n_steps):
        for j in range(n):
            rhs[j] = u[j]
        for it in range(max_sweeps):
            err = 0.0
            for j in range(1, n - 1):
                gs = (rhs[j] + a * (u[j - 1] + u[j + 1])) / diag
                new = u[j] + omega * (gs - u[j])
                if new < obst[j]:
                    new = obst[j]
                d = abs(new - u[j])
                if d > err:
                    err = d
                u[j] = new
            sweeps += 1
            if err < tol:
                break
        step = first_step + s + 1
        for j in range(n):
            if r_steps[j] == NEVER and u[j] <= obst[j] + contact_tol:
                r_steps[j] = step
    return sweeps


def _psor_advance_np(u, obst, a, omega, tol, max_sweeps, n_steps, first_step, r_steps, contact_tol):
    # red-black ordering so that each half sweep is a single vector update
    diag = 1.0 + 2.0 * a
    n = u.size
    odd = np.arange(1, n - 1, 2)
    even = np.arange(2, n - 1, 2)
    sweeps = 0
    for s in range(n_steps):
        rhs = u.copy()
        for it in range(max_sweeps):
            err = 0.0
            for idx in (odd, even):
                gs = (rhs[idx] + a * (u[idx - 1] + u[idx + 1])) / diag
                new = np.maximum(u[idx] + omega * (gs - u[idx]), obst[idx])
                if idx.size:
                    err = max(err, float(np.max(np.abs(new - u[idx]))))
                u[idx] = new
            sweeps += 1
            if err < tol:
                break
        hit = (r_steps == NEVER) & (u <= obst + contact_tol)
        r_steps[hit] = first_step + s + 1
    return sweeps


# backward dynamic programme for absorption laws of a trinomial walk
@njit
def _lattice_backward_nb(r_steps, abs_col, top, n_top, p, stride, out):
    n_x, n_abs = top.shape
    cur = top.copy()
    nxt = np.empty_like(cur)
    n_store = out.shape[0]
    if (n_store - 1) * stride >= n_top:
        for k in range(n_store):
            if k * stride >= n_top:
                out[k] = top
    mid = 1.0 - 2.0 * p
    for n in range(n_top - 1, -1, -1):
        for j in range(n_x):
            if r_steps[j] <= n:
                for c in range(n_abs):
                    nxt[j, c] = 0.0
                nxt[j, abs_col[j]] = 1.0
            else:
                jl = j - 1 if j > 0 else 1
                jr = j + 1 if j < n_x - 1 else n_x - 2
                for c in range(n_abs):
                    nxt[j, c] = p * cur[jl, c] + mid * cur[j, c] + p * cur[jr, c]
        tmp = cur
        cur = nxt
        nxt = tmp
        if n % stride == 0:
            out[n // stride] = cur
    return out


def _lattice_backward_np(r_steps, abs_col, top, n_top, p, stride, out):
    n_x, n_abs = top.shape
    n_store = out.shape[0]
    for k in range(n_store):
        if k * stride >= n_top:
            out[k] = top
    cur = top.copy()
    left = np.concatenate([[1], np.arange(n_x - 1)])
    right = np.concatenate([np.arange(1, n_x), [n_x - 2]])
    rows = np.arange(n_x)
    has_col = abs_col >= 0
    mid = 1.0 - 2.0 * p
    for n in range(n_top - 1, -1, -1):
        nxt = p * cur[left] + mid * cur + p * cur[right]
        absorbed = (r_steps <= n) & has_col
        if absorbed.any():
            nxt[absorbed] = 0.0
            nxt[rows[absorbed], abs_col[absorbed]] = 1.0
        cur = nxt
        if n % stride == 0:
            out[n // stride] = cur
    return out


# quantile tables of interpolated lattice laws
@njit
def _lattice_tables_nb(layers, layer_idx, node, theta, atoms, M, out):
    n_q = layer_idx.size
    n_abs = atoms.size
    for i in range(n_q):
        L = layer_idx[i]
        j = node[i]
        th = theta[i]
        cum = 0.0
        c = 0
        for k in range(M):
            level = (k + 0.5) / M
            while c < n_abs - 1:
                w = (1.0 - th) * layers[L, j, c]
                if th > 0.0:
                    w += th * layers[L, j + 1, c]
                if cum + w > level:
                    break
                cum += w
                c += 1
            out[i, k] = atoms[c]
    return out


def _lattice_tables_np(layers, layer_idx, node, theta, atoms, M, out):
    n_q = layer_idx.size
    if n_q == 0:
        return out
    j1 = np.minimum(node + 1, layers.shape[1] - 1)
    w = (1.0 - theta)[:, None] * layers[layer_idx, node] + theta[:, None] * layers[layer_idx, j1]
    cum = np.cumsum(w, axis=1)
    lev = (np.arange(M) + 0.5) / M
    # one flat searchsorted: shift row i by 2*i so rows do not interleave
    shift = 2.0 * np.arange(n_q)[:, None]
    flat = (cum + shift).ravel()
    pos = np.searchsorted(flat, (lev[None, :] + shift).ravel(), side="right").reshape(n_q, M)
    col = pos - atoms.size * np.arange(n_q)[:, None]
    np.clip(col, 0, atoms.size - 1, out=col)
    out[:] = atoms[col]
    return out


# Gaussian tables pushed through a piecewise-linear monotone map
@njit
def _push_tables_nb(b, s, z, nodes, vals, out):
    n = b.size
    M = z.size
    m = nodes.size
    for i in range(n):
        c = 0
        for k in range(M):
            y = b[i] + s[i] * z[k]
            if y <= nodes[0]:
                out[i, k] = vals[0]
            elif y >= nodes[m - 1]:
                out[i, k] = vals[m - 1]
            else:
                while nodes[c + 1] < y:
                    c += 1
                w = (y - nodes[c]) / (nodes[c + 1] - nodes[c])
                out[i, k] = vals[c] + w * (vals[c + 1] - vals[c])
    return out


def _push_tables_np(b, s, z, nodes, vals, out):
    y = b[:, None] + s[:, None] * z[None, :]
    out[:] = np.interp(y, nodes, vals)
    return out


@njit
def _push_wpp_nb(b, s, z, nodes, vals, p, out):
    n = b.size
    M = z.size
    m = nodes.size
    for i in range(n):
        c = 0
        acc = 0.0
        for k in range(M):
            y = b[i] + s[i] * z[k]
            if y <= nodes[0]:
                hy = vals[0]
            elif y >= nodes[m - 1]:
                hy = vals[m - 1]
            else:
                while nodes[c + 1] < y:
                    c += 1
                w = (y - nodes[c]) / (nodes[c + 1] - nodes[c])
                hy = vals[c] + w * (vals[c + 1] - vals[c])
            d = abs(y - hy)
            if p == 1.0:
                acc += d
            elif p == 2.0:
                acc += d * d
            else:
                acc += d**p
        out[i] = acc / M
    return out


def _push_wpp_np(b, s, z, nodes, vals, p, out):
    chunk = max(1, 2_000_000 // max(z.size, 1))
    for lo in range(0, b.size, chunk):
        y = b[lo : lo + chunk, None] + s[lo : lo + chunk, None] * z[None, :]
        d = np.abs(y - np.interp(y, nodes, vals))
        out[lo : lo + chunk] = np.mean(d if p == 1.0 else d**p, axis=1)
    return out


# path scans
@njit
def _barrier_hit_nb(values, times, x0, dx, r, start):
    n_nodes = r.size
    for k in range(start, values.size):
        j = int(np.floor((values[k] - x0) / dx + 0.5))
        if j < 0:
            j = 0
        elif j > n_nodes - 1:
            j = n_nodes - 1
        if times[k] >= r[j] - 1e-12:
            return k
    return -1


def _barrier_hit_np(values, times, x0, dx, r, start):
    j = np.clip(np.floor((values[start:] - x0) / dx + 0.5).astype(np.int64), 0, r.size - 1)
    hit = times[start:] >= r[j] - 1e-12
    if not hit.any():
        return -1
    return int(start + np.argmax(hit))


@njit
def _exit_scan_nb(values, lo, hi):
    for k in range(values.size):
        if values[k] <= lo or values[k] >= hi:
            return k
    return -1


def _exit_scan_np(values, lo, hi):
    hit = (values <= lo) | (values >= hi)
    if not hit.any():
        return -1
    return int(np.argmax(hit))


@njit
def _ay_scan_nb(values, x_nodes, psi_vals, right_end):
    s_max = values[0]
    m = x_nodes.size
    c = 0
    for k in range(values.size):
        if values[k] > s_max:
            s_max = values[k]
        if s_max >= right_end:
            return k
        if s_max <= x_nodes[0]:
            psi = psi_vals[0]
        elif s_max >= x_nodes[m - 1]:
            psi = psi_vals[m - 1]
        else:
            while x_nodes[c + 1] < s_max:
                c += 1
            w = (s_max - x_nodes[c]) / (x_nodes[c + 1] - x_nodes[c])
            psi = psi_vals[c] + w * (psi_vals[c + 1] - psi_vals[c])
        if values[k] <= psi:
            return k
    return -1


def _ay_scan_np(values, x_nodes, psi_vals, right_end):
    s = np.maximum.accumulate(values)
    hit = (s >= right_end) | (values <= np.interp(s, x_nodes, psi_vals))
    if not hit.any():
        return -1
    return int(np.argmax(hit))


@njit
def _ay_tables_nb(b, s_max, psi, pi, mu_values, M, out):
    n = b.size
    m_mu = mu_values.size
    for i in range(n):
        gap = s_max[i] - psi[i]
        if gap <= 1e-14 or b[i] <= psi[i]:
            target = psi[i] if gap > 1e-14 else b[i]
            for k in range(M):
                out[i, k] = target
            continue
        w0 = (s_max[i] - b[i]) / gap
        if w0 < 0.0:
            w0 = 0.0
        for k in range(M):
            q = (k + 0.5) / M
            if q < w0:
                out[i, k] = psi[i]
            else:
                level = pi[i] + (1.0 - pi[i]) * (q - w0) / (1.0 - w0)
                idx = int(level * m_mu)
                if idx > m_mu - 1:
                    idx = m_mu - 1
                # the step quantile at pi can sit a cell below the interpolated psi
                v = mu_values[idx]
                out[i, k] = v if v > psi[i] else psi[i]
    return out


def _ay_tables_np(b, s_max, psi, pi, mu_values, M, out):
    q = (np.arange(M) + 0.5) / M
    gap = s_max - psi
    live = (gap > 1e-14) & (b > psi)
    w0 = np.where(live, np.clip((s_max - b) / np.where(live, gap, 1.0), 0.0, None), 0.0)
    denom = np.where(live, 1.0 - w0, 1.0)
    level = pi[:, None] + (1.0 - pi[:, None]) * (q[None, :] - w0[:, None]) / denom[:, None]
    idx = np.clip((level * mu_values.size).astype(np.int64), 0, mu_values.size - 1)
    tail = np.maximum(mu_values[idx], psi[:, None])
    tab = np.where(q[None, :] < w0[:, None], psi[:, None], tail)
    dead = np.where(gap > 1e-14, psi, b)
    out[:] = np.where(live[:, None], tab, dead[:, None])
    return out


psor_advance = accelerated(_psor_advance_nb, _psor_advance_np)
lattice_backward = accelerated(_lattice_backward_nb, _lattice_backward_np)
lattice_tables = accelerated(_lattice_tables_nb, _lattice_tables_np)
push_tables = accelerated(_push_tables_nb, _push_tables_np)
push_wpp = accelerated(_push_wpp_nb, _push_wpp_np)
barrier_hit = accelerated(_barrier_hit_nb, _barrier_hit_np)
exit_scan = accelerated(_exit_scan_nb, _exit_scan_np)
ay_scan = accelerated(_ay_scan_nb, _ay_scan_np)
ay_tables = accelerated(_ay_tables_nb, _ay_tables_np)
