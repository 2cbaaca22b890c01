"""Vectorized numpy fallback for the compiled episode simulator.

Semantics match ``_ckernels.simulate`` exactly: inverse-CDF draws pick the
first index whose cumulative mass exceeds the uniform, clipped to the last
entry.
"""
import numpy as np


def _draw_rows(cdf_rows, u):
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def simulate(init_cdf, trans_cdf, emit_cdf, policy_table, policy_offsets,
             forced, stop, uniforms, obs, actions, states):
    n = uniforms.shape[0]
    if n == 0:
        return
    num_obs = emit_cdf.shape[2]
    s = _draw_rows(np.broadcast_to(init_cdf, (n, init_cdf.shape[0])), uniforms[:, 0])
    idx = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for j in range(int(stop.max())):
        live = rows[stop > j]
        if live.size == 0:
            break
        sl = s[live]
        states[live, j] = sl
        o = _draw_rows(emit_cdf[j, sl], uniforms[live, 2 * j + 1])
        obs[live, j] = o
        cont = stop[live] > j + 1
        live, sl, o = live[cont], sl[cont], o[cont]
        if live.size == 0:
            continue
        idx[live] = idx[live] * num_obs + o
        a = forced[live, j]
        follow = a < 0
        if follow.any():
            a = a.copy()
            a[follow] = policy_table[policy_offsets[j] + idx[live[follow]]]
        actions[live, j] = a
        s[live] = _draw_rows(trans_cdf[j, a, sl], uniforms[live, 2 * j + 2])
