"""Numba kernels for anisotropic fast marching.

Front propagation in the Dijkstra style with a binary heap keyed on
(value, node index) for determinism.  Node updates are semi-Lagrangian
Hopf-Lax minimizations over two-point simplices [y1, y2] of stencil
neighbors:

    D(x) = min over simplices, t in [0, 1] of
           F(x, x - y_t) + (1 - t) D(y1) + t D(y2)

where y_t = (1 - t) y1 + t y2.  The interior stationary point in t has a
closed form for Randers metrics; convexity makes the clamped stationary
point the exact minimizer on [0, 1].  Strict improvements to
already-accepted nodes re-open them a bounded number of times, which
repairs the causality violations strong asymmetry can cause.

Both kernels receive the stencil as index offsets plus a CSR adjacency
table: row k lists the offsets j such that [x + off\\[neg(k)\\], x + off\\[j\\]]
is a valid simplex seen from x (the caller pre-applies the negation so the
kernel can enumerate x = z + off[k] directly when z is accepted).

State codes: 0 far, 1 trial, 2 accepted.
"""

import numpy as np
from numba import njit

from .metrics import randers_cost

# Compiled from the same source as the point-evaluation path so node
# updates and metric evaluation cannot drift apart.
_randers2 = njit(cache=True)(randers_cost)


@njit(cache=True)
def _randers3(m1, m2, m3, wx, wy, wz, ux, uy, uz):
    quad = m1 * ux * ux + m2 * uy * uy + m3 * uz * uz
    return np.sqrt(quad) + wx * ux + wy * uy + wz * uz


@njit(cache=True)
def _heap_up(keys, idxs, i):
    while i > 0:
        p = (i - 1) >> 1
        if keys[i] < keys[p] or (keys[i] == keys[p] and idxs[i] < idxs[p]):
            keys[i], keys[p] = keys[p], keys[i]
            idxs[i], idxs[p] = idxs[p], idxs[i]
            i = p
        else:
            break


@njit(cache=True)
def _heap_down(keys, idxs, size):
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        r = l + 1
        best = i
        if keys[l] < keys[best] or (keys[l] == keys[best] and idxs[l] < idxs[best]):
            best = l
        if r < size and (
            keys[r] < keys[best] or (keys[r] == keys[best] and idxs[r] < idxs[best])
        ):
            best = r
        if best == i:
            break
        keys[i], keys[best] = keys[best], keys[i]
        idxs[i], idxs[best] = idxs[best], idxs[i]
        i = best


@njit(cache=True, inline="always")
def _hopflax_t(a, b, q0, c):
    """Clamped minimizer of h(t) = sqrt(q0 + 2bt + at^2) + ct over [0, 1].

    h is convex (a q0 >= b^2 by Cauchy-Schwarz), so clamping the interior
    stationary point to [0, 1] yields the exact constrained minimizer.
    """
    if a > c * c:
        g2 = (a * q0 - b * b) / (a - c * c)
        g = np.sqrt(g2) if g2 > 0.0 else 0.0
        t = (-b - c * g) / a
    else:
        # h' cannot vanish, so it keeps one sign; follow it to an endpoint
        t = 0.0 if b + c * np.sqrt(q0) >= 0.0 else 1.0
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return t


@njit(cache=True)
def solve2(
    m11,
    m12,
    m22,
    wx,
    wy,
    w,
    h,
    spacing,
    off_x,
    off_y,
    adj_idx,
    adj_ptr,
    midflag,
    mid1x,
    mid1y,
    mid2x,
    mid2y,
    seed_nodes,
    seed_vals,
    seed_labels,
    domain,
    stop_mode,
    is_stop,
    n_stop,
    dmax,
    max_reins,
    dist,
    labels,
    state,
    parent1,
    parent2,
    parent_t,
    accept_order,
    reins,
):
    """2D Randers fast marching over a w-by-h grid.

    Metric arrays are per-node, flattened C-order (row i, column j at
    index i * w + j).  Returns the number of accepted nodes.
    stop_mode: 0 none, 1 first_reached (is_stop flags), 2 distance cap.
    Offsets longer than one cell carry the two nodes flanking their
    midpoint (midflag/mid*), and the edge is unusable when either is
    masked; this keeps the wide stencil from tunneling through thin walls.
    """
    n = w * h
    nk = off_x.shape[0]
    cap = 4 * n + 64
    hkeys = np.empty(cap, dtype=np.float64)
    hidx = np.empty(cap, dtype=np.int64)
    size = 0

    for s in range(seed_nodes.shape[0]):
        node = seed_nodes[s]
        if domain[node] == 0:
            continue
        if seed_vals[s] < dist[node] or (
            seed_vals[s] == dist[node] and seed_labels[s] < labels[node]
        ):
            dist[node] = seed_vals[s]
            labels[node] = seed_labels[s]
            state[node] = 1
            hkeys[size] = seed_vals[s]
            hidx[size] = node
            size += 1
            _heap_up(hkeys, hidx, size - 1)

    stop_remaining = n_stop
    counter = 0
    while size > 0:
        key = hkeys[0]
        z = hidx[0]
        size -= 1
        if size > 0:
            hkeys[0] = hkeys[size]
            hidx[0] = hidx[size]
            _heap_down(hkeys, hidx, size)
        if key > dist[z] or state[z] == 2:
            continue  # stale entry
        if stop_mode == 2 and key > dmax:
            break
        state[z] = 2
        accept_order[z] = counter
        counter += 1
        if stop_mode == 1 and is_stop[z] == 1:
            is_stop[z] = 2
            stop_remaining -= 1
            if stop_remaining == 0:
                break

        zi = z // w
        zj = z - zi * w
        dz = dist[z]
        for k in range(nk):
            xi = zi + off_y[k]
            xj = zj + off_x[k]
            if xi < 0 or xi >= h or xj < 0 or xj >= w:
                continue
            x = xi * w + xj
            if domain[x] == 0:
                continue
            if midflag[k] == 1 and (
                domain[(zi + mid1y[k]) * w + (zj + mid1x[k])] == 0
                or domain[(zi + mid2y[k]) * w + (zj + mid2x[k])] == 0
            ):
                continue
            closed = state[x] == 2
            if closed and reins[x] >= max_reins and labels[x] <= 0:
                continue  # no improvement budget and no label tie to fix
            # e1 = x - z, e2 = x - y2 in physical units
            e1x = off_x[k] * spacing
            e1y = off_y[k] * spacing
            a11 = m11[x]
            a12 = m12[x]
            a22 = m22[x]
            bx = wx[x]
            by = wy[x]
            q0 = e1x * (a11 * e1x + a12 * e1y) + e1y * (a12 * e1x + a22 * e1y)
            drift1 = bx * e1x + by * e1y
            best = _randers2(a11, a12, a22, bx, by, e1x, e1y) + dz
            bj2 = -1
            bt = 0.0
            for p in range(adj_ptr[k], adj_ptr[k + 1]):
                j = adj_idx[p]
                yi = xi + off_y[j]
                yj = xj + off_x[j]
                if yi < 0 or yi >= h or yj < 0 or yj >= w:
                    continue
                y2 = yi * w + yj
                if state[y2] != 2 or domain[y2] == 0:
                    continue
                if midflag[j] == 1 and (
                    domain[(xi + mid1y[j]) * w + (xj + mid1x[j])] == 0
                    or domain[(xi + mid2y[j]) * w + (xj + mid2x[j])] == 0
                ):
                    continue
                d2 = dist[y2]
                e2x = -off_x[j] * spacing
                e2y = -off_y[j] * spacing
                dlx = e2x - e1x
                dly = e2y - e1y
                mdlx = a11 * dlx + a12 * dly
                mdly = a12 * dlx + a22 * dly
                a = dlx * mdlx + dly * mdly
                b = e1x * mdlx + e1y * mdly
                c = bx * dlx + by * dly + d2 - dz
                t = _hopflax_t(a, b, q0, c)
                if t <= 0.0:
                    continue  # coincides with the one-point update
                q = q0 + 2.0 * b * t + a * t * t
                val = np.sqrt(q) + drift1 + dz + c * t
                if val < best:
                    best = val
                    bj2 = y2
                    bt = t
            lab = labels[z] if (bt <= 0.5 or bj2 == -1) else labels[bj2]
            if best < dist[x] - 1e-12 * (1.0 + np.abs(best)):
                if closed:
                    if reins[x] >= max_reins:
                        continue
                    reins[x] += 1
                dist[x] = best
                labels[x] = lab
                parent1[x] = z
                parent2[x] = bj2
                parent_t[x] = bt
                state[x] = 1
                if size >= cap:
                    newcap = cap * 2
                    nkeys = np.empty(newcap, dtype=np.float64)
                    nidx = np.empty(newcap, dtype=np.int64)
                    nkeys[:size] = hkeys[:size]
                    nidx[:size] = hidx[:size]
                    hkeys = nkeys
                    hidx = nidx
                    cap = newcap
                hkeys[size] = best
                hidx[size] = x
                size += 1
                _heap_up(hkeys, hidx, size - 1)
            elif best == dist[x] and 0 <= lab < labels[x]:
                labels[x] = lab  # equal-value tie: keep the lowest label
    return counter


@njit(cache=True)
def solve3(
    m1,
    m2,
    m3,
    wx,
    wy,
    wz,
    w,
    h,
    nt,
    spacing,
    dtheta,
    off_x,
    off_y,
    off_t,
    adj_idx,
    adj_ptr,
    seed_nodes,
    seed_vals,
    seed_labels,
    domain,
    stop_mode,
    is_stop,
    n_stop,
    dmax,
    max_reins,
    dist,
    labels,
    state,
    parent1,
    parent2,
    parent_t,
    accept_order,
    reins,
):
    """Orientation-lifted fast marching on a w-by-h-by-nt grid.

    The metric is diagonal Randers per node: quadratic part
    diag(m1, m2, m3) over physical displacements (dx, dy, dtheta_rad) and
    linear part (wx, wy, wz).  The theta axis is periodic.  Node (t, i, j)
    lives at flat index (t * h + i) * w + j.  Returns accepted count.
    """
    n = w * h * nt
    nk = off_x.shape[0]
    cap = 4 * n + 64
    hkeys = np.empty(cap, dtype=np.float64)
    hidx = np.empty(cap, dtype=np.int64)
    size = 0

    for s in range(seed_nodes.shape[0]):
        node = seed_nodes[s]
        if domain[node] == 0:
            continue
        if seed_vals[s] < dist[node] or (
            seed_vals[s] == dist[node] and seed_labels[s] < labels[node]
        ):
            dist[node] = seed_vals[s]
            labels[node] = seed_labels[s]
            state[node] = 1
            hkeys[size] = seed_vals[s]
            hidx[size] = node
            size += 1
            _heap_up(hkeys, hidx, size - 1)

    stop_remaining = n_stop
    counter = 0
    plane = w * h
    while size > 0:
        key = hkeys[0]
        z = hidx[0]
        size -= 1
        if size > 0:
            hkeys[0] = hkeys[size]
            hidx[0] = hidx[size]
            _heap_down(hkeys, hidx, size)
        if key > dist[z] or state[z] == 2:
            continue
        if stop_mode == 2 and key > dmax:
            break
        state[z] = 2
        accept_order[z] = counter
        counter += 1
        if stop_mode == 1 and is_stop[z] == 1:
            is_stop[z] = 2
            stop_remaining -= 1
            if stop_remaining == 0:
                break

        zt = z // plane
        rem = z - zt * plane
        zi = rem // w
        zj = rem - zi * w
        dz = dist[z]
        for k in range(nk):
            xi = zi + off_y[k]
            xj = zj + off_x[k]
            if xi < 0 or xi >= h or xj < 0 or xj >= w:
                continue
            xt = zt + off_t[k]
            if xt < 0:
                xt += nt
            elif xt >= nt:
                xt -= nt
            x = (xt * h + xi) * w + xj
            if domain[x] == 0:
                continue
            closed = state[x] == 2
            if closed and reins[x] >= max_reins and labels[x] <= 0:
                continue
            e1x = off_x[k] * spacing
            e1y = off_y[k] * spacing
            e1t = off_t[k] * dtheta
            a1 = m1[x]
            a2 = m2[x]
            a3 = m3[x]
            bx = wx[x]
            by = wy[x]
            bt_ = wz[x]
            q0 = a1 * e1x * e1x + a2 * e1y * e1y + a3 * e1t * e1t
            drift1 = bx * e1x + by * e1y + bt_ * e1t
            best = _randers3(a1, a2, a3, bx, by, bt_, e1x, e1y, e1t) + dz
            bj2 = -1
            btv = 0.0
            for p in range(adj_ptr[k], adj_ptr[k + 1]):
                j = adj_idx[p]
                yi = xi + off_y[j]
                yj = xj + off_x[j]
                if yi < 0 or yi >= h or yj < 0 or yj >= w:
                    continue
                yt = xt + off_t[j]
                if yt < 0:
                    yt += nt
                elif yt >= nt:
                    yt -= nt
                y2 = (yt * h + yi) * w + yj
                if state[y2] != 2 or domain[y2] == 0:
                    continue
                d2 = dist[y2]
                dlx = -off_x[j] * spacing - e1x
                dly = -off_y[j] * spacing - e1y
                dlt = -off_t[j] * dtheta - e1t
                a = a1 * dlx * dlx + a2 * dly * dly + a3 * dlt * dlt
                b = a1 * e1x * dlx + a2 * e1y * dly + a3 * e1t * dlt
                c = bx * dlx + by * dly + bt_ * dlt + d2 - dz
                t = _hopflax_t(a, b, q0, c)
                if t <= 0.0:
                    continue
                q = q0 + 2.0 * b * t + a * t * t
                val = np.sqrt(q) + drift1 + dz + c * t
                if val < best:
                    best = val
                    bj2 = y2
                    btv = t
            lab = labels[z] if (btv <= 0.5 or bj2 == -1) else labels[bj2]
            if best < dist[x] - 1e-12 * (1.0 + np.abs(best)):
                if closed:
                    if reins[x] >= max_reins:
                        continue
                    reins[x] += 1
                dist[x] = best
                labels[x] = lab
                parent1[x] = z
                parent2[x] = bj2
                parent_t[x] = btv
                state[x] = 1
                if size >= cap:
                    newcap = cap * 2
                    nkeys = np.empty(newcap, dtype=np.float64)
                    nidx = np.empty(newcap, dtype=np.int64)
                    nkeys[:size] = hkeys[:size]
                    nidx[:size] = hidx[:size]
                    hkeys = nkeys
                    hidx = nidx
                    cap = newcap
                hkeys[size] = best
                hidx[size] = x
                size += 1
                _heap_up(hkeys, hidx, size - 1)
            elif best == dist[x] and 0 <= lab < labels[x]:
                labels[x] = lab
    return counter
