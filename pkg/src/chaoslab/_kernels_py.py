"""Numpy twins of the compiled kernels, with identical arithmetic."""
import numpy as np


def _step(x, lo, hi, z, u, dt):
    y = x + np.sqrt(dt) * z
    below = y <= lo
    above = (y >= hi) & ~below
    inside = ~(below | above)
    with np.errstate(over="ignore", under="ignore"):
        plo = np.exp(-2.0 * (x - lo) * (y - lo) / dt)
        phi = np.exp(-2.0 * (hi - x) * (hi - y) / dt)
    hit_lo = below | (inside & (u < plo))
    hit_hi = above | (inside & ~hit_lo & (u < plo + phi))
    side = np.zeros(x.shape, dtype=np.int8)
    side[hit_lo] = -1
    side[hit_hi] = 1
    x_new = np.where(hit_lo, lo, np.where(hit_hi, hi, y))
    return x_new, side


def bridge_step(x, lo, hi, z, u, dt, dx, side):
    x_new, sd = _step(x, lo, hi, z, u, dt)
    dx[:] = x_new - x
    x[:] = x_new
    side[:] = sd


def exit_block(x, lo, hi, z, u, dt, steps, side):
    steps[:] = -1
    side[:] = 0
    live = np.arange(x.shape[0])
    for s in range(z.shape[1]):
        if live.size == 0:
            break
        x_new, sd = _step(x[live], lo[live], hi[live], z[live, s], u[live, s], dt)
        x[live] = x_new
        hit = sd != 0
        steps[live[hit]] = s
        side[live[hit]] = sd[hit]
        live = live[~hit]


def series_direct(t, a1, a2, k0, out, chunk=256):
    k = np.arange(k0, k0 + a1.shape[0], dtype=np.float64)
    w1 = a1 / np.sqrt(k)
    w2 = a2 / np.sqrt(k)
    for j0 in range(0, t.shape[0], chunk):
        th = 2.0 * np.pi * np.outer(t[j0:j0 + chunk], k)
        out[j0:j0 + chunk] = np.cos(th) @ w1 + np.sin(th) @ w2
