"""Compiled inner loops: Gray-code enumeration and heat-bath sweeps.

Edge-to-plaquette incidence is passed in CSR form (ptr, idx).
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _ctz(x):
    n = 0
    while (x & 1) == 0:
        x >>= 1
        n += 1
    return n


@njit(cache=True)
def _enumerate_block(start, stop, n_free, ptr, idx, obs_of_edge, n_plaq, hist):
    par = np.zeros(n_plaq, dtype=np.uint8)
    gray = start ^ (start >> 1)
    frustrated = 0
    obs = 0
    for f in range(n_free):
        if (gray >> f) & 1:
            obs ^= obs_of_edge[f]
            for t in range(ptr[f], ptr[f + 1]):
                p = idx[t]
                par[p] ^= 1
    for p in range(n_plaq):
        frustrated += par[p]
    hist[frustrated, obs] += 1
    for i in range(start + 1, stop):
        f = _ctz(i)
        obs ^= obs_of_edge[f]
        for t in range(ptr[f], ptr[f + 1]):
            p = idx[t]
            if par[p]:
                par[p] = 0
                frustrated -= 1
            else:
                par[p] = 1
                frustrated += 1
        hist[frustrated, obs] += 1


@njit(parallel=True, cache=True)
def enumerate_histogram(n_free, ptr, idx, obs_of_edge, n_plaq, n_obs_states, n_blocks):
    """counts[k, mask]: configurations with k frustrated plaquettes and observable bits mask."""
    total = np.int64(1) << n_free
    per = (total + n_blocks - 1) // n_blocks
    hists = np.zeros((n_blocks, n_plaq + 1, n_obs_states), dtype=np.int64)
    for b in prange(n_blocks):
        start = b * per
        stop = min(total, start + per)
        if start < stop:
            _enumerate_block(start, stop, n_free, ptr, idx, obs_of_edge, n_plaq, hists[b])
    out = np.zeros((n_plaq + 1, n_obs_states), dtype=np.int64)
    for b in range(n_blocks):
        out += hists[b]
    return out


@njit(cache=True)
def heatbath_sweeps(spins, par, obs_state, ptr, idx, obs_of_edge, beta, uniforms, out_obs, out_frustrated):
    """Sweep all edges in index order once per row of `uniforms`.

    spins, par and obs_state (length-1 array) are updated in place.
    """
    n_sweeps, n_edges = uniforms.shape
    obs = obs_state[0]
    frustrated = 0
    for p in range(par.shape[0]):
        frustrated += par[p]
    for s in range(n_sweeps):
        for e in range(n_edges):
            h = 0
            cur = spins[e]
            for t in range(ptr[e], ptr[e + 1]):
                # product of the other three edge signs of the plaquette
                if par[idx[t]] ^ cur:
                    h -= 1
                else:
                    h += 1
            p_zero = 1.0 / (1.0 + np.exp(-2.0 * beta * h))
            new = 0 if uniforms[s, e] < p_zero else 1
            if new != cur:
                spins[e] = new
                obs ^= obs_of_edge[e]
                for t in range(ptr[e], ptr[e + 1]):
                    p = idx[t]
                    if par[p]:
                        par[p] = 0
                        frustrated -= 1
                    else:
                        par[p] = 1
                        frustrated += 1
        out_obs[s] = obs
        out_frustrated[s] = frustrated
    obs_state[0] = obs
