"""Hot inner loops of the protection sweep, JIT-compiled when possible.

Three kernels, each operating on the flat slot arrays of a StrategyIndex:

* forward sweep: walks time layers backwards from one target, producing the
  per-layer reach values, the protection of every slot, and search stats;
* adjoint sweep: pulls a weighted combination of protection values back to
  per-slot derivatives by reverse accumulation over the stored layers;
* table sweep: forward sweep that additionally carries a dense derivative
  row per (pair, time) cell, yielding the full protection gradient table.

Every kernel has a numba @njit build and a pure-numpy build with identical
semantics.  Set PATROLKIT_PURE_NUMPY=1 to force the numpy path (it is also
used automatically when numba is unavailable).
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("PATROLKIT_PURE_NUMPY", "").strip().lower() not in ("", "0", "false")

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled via PATROLKIT_PURE_NUMPY")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # pragma: no cover - trivial passthrough
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# Forward value sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def _forward_jit(D, n_pairs, n_slots, seed_pairs, seed_val, f, slot_src, slot_dst, slot_time, in_ptr, in_ids):
    layers = np.zeros((D + 1, n_pairs))
    layer_times = np.empty(D + 1, dtype=np.int64)
    n_layers = 0
    items = 0
    live = 0
    for q in seed_pairs:
        layers[0, q] = seed_val
        live += 1
    peak = live

    for t in range(D + 1):
        npop = 0
        for q in range(n_pairs):
            if layers[t, q] != 0.0:
                npop += 1
        if npop == 0:
            continue
        layer_times[n_layers] = t
        n_layers += 1
        items += npop
        live -= npop
        for q in range(n_pairs):
            v = layers[t, q]
            if v == 0.0:
                continue
            for idx in range(in_ptr[q], in_ptr[q + 1]):
                j = in_ids[idx]
                c = slot_time[j]
                if t + c > D:
                    continue
                p = f[j] * v
                if p != 0.0:
                    q2 = slot_src[j]
                    if layers[t + c, q2] == 0.0:
                        live += 1
                        if live > peak:
                            peak = live
                    layers[t + c, q2] += p

    # Protection per slot: running sums of layer values at the slot's
    # destination pair, cut at the slot's remaining budget.
    cs = np.zeros((D + 1, n_pairs))
    for q in range(n_pairs):
        acc = 0.0
        for t in range(D + 1):
            acc += layers[t, q]
            cs[t, q] = acc
    P = np.zeros(n_slots)
    for j in range(n_slots):
        te = D - slot_time[j]
        if te >= 0:
            P[j] = cs[te, slot_dst[j]]
    return layers, P, layer_times[:n_layers].copy(), items, peak


def _forward_np(D, n_pairs, n_slots, seed_pairs, seed_val, f, slot_src, slot_dst, slot_time, in_ptr, in_ids):
    layers = np.zeros((D + 1, n_pairs))
    layers[0, seed_pairs] = seed_val
    flat = layers.reshape(-1)
    offs = slot_time * n_pairs + slot_src
    layer_times = []
    items = 0
    peak = len(seed_pairs)
    for t in range(D + 1):
        row = layers[t]
        npop = int(np.count_nonzero(row))
        if npop == 0:
            continue
        layer_times.append(t)
        items += npop
        contrib = f * row[slot_dst]
        mask = (contrib != 0.0) & (t + slot_time <= D)
        if mask.any():
            np.add.at(flat, t * n_pairs + offs[mask], contrib[mask])
        pending = int(np.count_nonzero(layers[t + 1 :]))
        if pending > peak:
            peak = pending
    cs = np.cumsum(layers, axis=0)
    P = np.zeros(n_slots)
    ok = slot_time <= D
    P[ok] = cs[D - slot_time[ok], slot_dst[ok]]
    return layers, P, np.array(layer_times, dtype=np.int64), items, peak


# ---------------------------------------------------------------------------
# Adjoint (reverse accumulation) sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def _adjoint_jit(D, n_pairs, n_slots, w, f, fac, slot_src, slot_dst, slot_time, layers):
    lam = np.zeros((D + 1, n_pairs))
    for j in range(n_slots):
        wj = w[j]
        if wj != 0.0:
            te = D - slot_time[j]
            if te >= 0:
                q = slot_dst[j]
                for t in range(te + 1):
                    lam[t, q] += wj
    for t in range(D - 1, -1, -1):
        for j in range(n_slots):
            c = slot_time[j]
            if t + c <= D:
                fj = f[j]
                if fj != 0.0:
                    up = lam[t + c, slot_src[j]]
                    if up != 0.0:
                        lam[t, slot_dst[j]] += fj * up
    dsig = np.zeros(n_slots)
    for j in range(n_slots):
        c = slot_time[j]
        if c <= D and fac[j] != 0.0:
            acc = 0.0
            src = slot_src[j]
            dst = slot_dst[j]
            for t in range(D - c + 1):
                acc += lam[t + c, src] * layers[t, dst]
            dsig[j] = fac[j] * acc
    return dsig


def _adjoint_np(D, n_pairs, n_slots, w, f, fac, slot_src, slot_dst, slot_time, layers):
    lam = np.zeros((D + 1, n_pairs))
    for j in np.nonzero(w)[0]:
        te = D - slot_time[j]
        if te >= 0:
            lam[: te + 1, slot_dst[j]] += w[j]
    flat = lam.reshape(-1)
    active = f != 0.0
    for t in range(D - 1, -1, -1):
        mask = active & (t + slot_time <= D)
        if not mask.any():
            continue
        vals = f[mask] * flat[(t + slot_time[mask]) * n_pairs + slot_src[mask]]
        np.add.at(lam[t], slot_dst[mask], vals)
    dsig = np.zeros(n_slots)
    for c in np.unique(slot_time):
        c = int(c)
        if c > D:
            continue
        js = np.nonzero((slot_time == c) & (fac != 0.0))[0]
        if js.size == 0:
            continue
        dsig[js] = fac[js] * np.einsum(
            "ts,ts->s", lam[c : D + 1, slot_src[js]], layers[: D - c + 1, slot_dst[js]]
        )
    return dsig


# ---------------------------------------------------------------------------
# Table sweep (values plus dense gradient rows)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _table_jit(D, R, n_pairs, n_slots, seed_pairs, seed_val, f, fac, slot_src, slot_dst, slot_time, in_ptr, in_ids):
    ring_v = np.zeros((R, n_pairs))
    ring_g = np.zeros((R, n_pairs, n_slots))
    ring_live = np.zeros((R, n_pairs), dtype=np.uint8)
    ring_hasg = np.zeros((R, n_pairs), dtype=np.uint8)
    P = np.zeros(n_slots)
    GT = np.zeros((n_slots, n_slots))
    layer_times = np.empty(D + 1, dtype=np.int64)
    n_layers = 0
    items = 0
    live = 0
    for q in seed_pairs:
        ring_v[0, q] = seed_val
        ring_live[0, q] = 1
        live += 1
    peak = live

    for t in range(D + 1):
        r = t % R
        npop = 0
        for q in range(n_pairs):
            if ring_live[r, q]:
                npop += 1
        if npop == 0:
            continue
        layer_times[n_layers] = t
        n_layers += 1
        items += npop
        live -= npop
        for q in range(n_pairs):
            if ring_live[r, q] == 0:
                continue
            v = ring_v[r, q]
            hasg = ring_hasg[r, q] != 0
            for idx in range(in_ptr[q], in_ptr[q + 1]):
                j = in_ids[idx]
                c = slot_time[j]
                if t + c > D:
                    continue
                P[j] += v
                if hasg:
                    for s in range(n_slots):
                        GT[j, s] += ring_g[r, q, s]
                fj = f[j]
                prop_g = hasg and fj != 0.0
                point_g = fac[j] != 0.0 and v != 0.0
                newv = fj * v
                if newv != 0.0 or prop_g or point_g:
                    r2 = (t + c) % R
                    q2 = slot_src[j]
                    ring_v[r2, q2] += newv
                    if prop_g:
                        for s in range(n_slots):
                            ring_g[r2, q2, s] += fj * ring_g[r, q, s]
                    if point_g:
                        ring_g[r2, q2, j] += fac[j] * v
                    if prop_g or point_g:
                        ring_hasg[r2, q2] = 1
                    if ring_live[r2, q2] == 0:
                        ring_live[r2, q2] = 1
                        live += 1
                        if live > peak:
                            peak = live
        for q in range(n_pairs):
            if ring_live[r, q]:
                ring_v[r, q] = 0.0
                ring_live[r, q] = 0
                if ring_hasg[r, q]:
                    ring_hasg[r, q] = 0
                    for s in range(n_slots):
                        ring_g[r, q, s] = 0.0
    return P, GT, layer_times[:n_layers].copy(), items, peak


def _table_np(D, R, n_pairs, n_slots, seed_pairs, seed_val, f, fac, slot_src, slot_dst, slot_time, in_ptr, in_ids):
    ring_v = np.zeros((R, n_pairs))
    ring_g = np.zeros((R, n_pairs, n_slots))
    ring_live = np.zeros((R, n_pairs), dtype=bool)
    ring_hasg = np.zeros((R, n_pairs), dtype=bool)
    P = np.zeros(n_slots)
    GT = np.zeros((n_slots, n_slots))
    layer_times = []
    items = 0
    ring_v[0, seed_pairs] = seed_val
    ring_live[0, seed_pairs] = True
    live = len(seed_pairs)
    peak = live

    for t in range(D + 1):
        r = t % R
        liveq = np.nonzero(ring_live[r])[0]
        if liveq.size == 0:
            continue
        layer_times.append(t)
        items += liveq.size
        live -= liveq.size
        for q in liveq:
            v = ring_v[r, q]
            grow = ring_g[r, q]
            hasg = bool(ring_hasg[r, q])
            js = in_ids[in_ptr[q] : in_ptr[q + 1]]
            js = js[t + slot_time[js] <= D]
            if js.size == 0:
                continue
            P[js] += v
            if hasg:
                GT[js] += grow[None, :]
            fj = f[js]
            facj = fac[js]
            newv = fj * v
            prop_g = hasg & (fj != 0.0)
            point_g = (facj != 0.0) & (v != 0.0)
            push = (newv != 0.0) | prop_g | point_g
            if not push.any():
                continue
            r2 = (t + slot_time[js[push]]) % R
            q2 = slot_src[js[push]]
            was_dead = ~ring_live[r2, q2]
            ring_v[r2, q2] += newv[push]
            if hasg:
                pg = push & prop_g
                if pg.any():
                    rp = (t + slot_time[js[pg]]) % R
                    qp = slot_src[js[pg]]
                    ring_g[rp, qp] += fj[pg][:, None] * grow[None, :]
                    ring_hasg[rp, qp] = True
            ptg = push & point_g
            if ptg.any():
                rp = (t + slot_time[js[ptg]]) % R
                qp = slot_src[js[ptg]]
                ring_g[rp, qp, js[ptg]] += facj[ptg] * v
                ring_hasg[rp, qp] = True
            ring_live[r2, q2] = True
            live += int(was_dead.sum())
            if live > peak:
                peak = live
        ring_v[r, liveq] = 0.0
        ring_g[r, liveq] = 0.0
        ring_live[r, liveq] = False
        ring_hasg[r, liveq] = False
    return P, GT, np.array(layer_times, dtype=np.int64), items, peak


if NUMBA_ENABLED:
    forward_sweep = _forward_jit
    adjoint_sweep = _adjoint_jit
    table_sweep = _table_jit
else:
    forward_sweep = _forward_np
    adjoint_sweep = _adjoint_np
    table_sweep = _table_np
