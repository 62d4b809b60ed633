"""Pure numpy implementation of the hot loops.

Mirrors ``_ckernels.pyx`` argument for argument; see that module for the
calling conventions. This backend is selected when the compiled extension is
unavailable or ``STOCHMECH_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import math

import numpy as np

OVERFLOW = 1e150

# scheme codes
SYMPLECTIC, EULER_MARUYAMA, HEUN, SPLIT_STEP = 0, 1, 2, 3
# gating codes
GATE_OFF, GATE_UNSTABLE, GATE_ALL = 0, 1, 2
# limiter codes
UPWIND, MINMOD, VAN_LEER, MC = 0, 1, 2, 3

TWO_PI = 2.0 * math.pi


def _force(code, prm, x):
    """dV/dx for the catalog potential ``code`` with kernel parameters ``prm``."""
    if code == 0:
        return np.zeros_like(x)
    if code == 1:
        return prm[1] * x
    if code == 2:
        return -(prm[1] * x)
    if code == 3:
        return prm[1] * np.sin(x)
    u = x / prm[2]
    return 4.0 * prm[1] * u * (u * u - 1.0) / prm[2]


def _curv(code, prm, x):
    if code == 0:
        return np.zeros_like(x)
    if code == 1:
        return np.full_like(x, prm[1])
    if code == 2:
        return np.full_like(x, -prm[1])
    if code == 3:
        return prm[1] * np.cos(x)
    a = prm[2]
    return prm[1] * (12.0 * x * x / (a * a) - 4.0) / (a * a)


def _wrap(x):
    return np.mod(x + math.pi, TWO_PI) - math.pi


def _sigmas(code, prm, x, gating, hbar, rate_tol):
    m = prm[0]
    c = _curv(code, prm, x)
    unstable = -c > rate_tol
    sx0 = math.sqrt(hbar / (2.0 * m))
    if gating == GATE_ALL:
        sx = np.full_like(x, sx0)
    elif gating == GATE_UNSTABLE:
        sx = np.where(unstable, sx0, 0.0)
    else:
        sx = np.zeros_like(x)
    if gating == GATE_OFF:
        sp = np.zeros_like(x)
    else:
        sp = np.where(unstable, np.sqrt(np.where(unstable, hbar * -c, 0.0) / 2.0), 0.0)
    return sx, sp


def _leapfrog(code, prm, x, p, dt):
    h = 0.5 * dt
    m = prm[0]
    p = p - h * _force(code, prm, x)
    x = x + dt * (p / m)
    p = p - h * _force(code, prm, x)
    return x, p


def _step(code, prm, x, p, dWx, dWp, dt, scheme, gating, hbar, rate_tol):
    m = prm[0]
    if scheme == SYMPLECTIC:
        return _leapfrog(code, prm, x, p, dt)
    sx, sp = _sigmas(code, prm, x, gating, hbar, rate_tol)
    nx = sx * dWx
    np_ = sp * dWp
    if scheme == EULER_MARUYAMA:
        fx = p / m
        fp = -_force(code, prm, x)
        return x + fx * dt + nx, p + fp * dt + np_
    if scheme == HEUN:
        fx = p / m
        fp = -_force(code, prm, x)
        xs = x + fx * dt + nx
        ps = p + fp * dt + np_
        fx2 = ps / m
        fp2 = -_force(code, prm, xs)
        return x + (0.5 * (fx + fx2)) * dt + nx, p + (0.5 * (fp + fp2)) * dt + np_
    x1, p1 = _leapfrog(code, prm, x, p, dt)
    return x1 + nx, p1 + np_


def integrate_block(code, prm, x0, p0, dW, dt, nsteps, scheme, gating, hbar,
                    rate_tol, sample_every, periodic):
    """Advance a block of paths.

    Parameters
    ----------
    x0, p0 : (B, n) arrays
    dW : (B, nsteps, 2n) Wiener increments, x channels first; ignored (may be
        None) for the symplectic scheme.

    Returns
    -------
    xs, ps : (B, S, n) samples at steps ``0, sample_every, ...``
    truncated : (B,) bool, paths that overflowed (their later samples are NaN)
    """
    prm = np.asarray(prm, dtype=float)
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    B, n = x.shape
    S = nsteps // sample_every + 1
    xs = np.full((B, S, n), np.nan)
    ps = np.full((B, S, n), np.nan)
    xs[:, 0] = x
    ps[:, 0] = p
    alive = np.ones(B, dtype=bool)
    zeros = np.zeros((B, n))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            if dW is None or scheme == SYMPLECTIC:
                dWx = dWp = zeros
            else:
                dWx = dW[:, k, :n]
                dWp = dW[:, k, n:]
            x1, p1 = _step(code, prm, x, p, dWx, dWp, dt, scheme, gating, hbar, rate_tol)
            if periodic:
                x1 = _wrap(x1)
            bad = ~(np.all(np.abs(x1) < OVERFLOW, axis=1) & np.all(np.abs(p1) < OVERFLOW, axis=1))
            alive &= ~bad
            x = np.where(alive[:, None], x1, x)
            p = np.where(alive[:, None], p1, p)
            if (k + 1) % sample_every == 0:
                s = (k + 1) // sample_every
                xs[:, s] = np.where(alive[:, None], x, np.nan)
                ps[:, s] = np.where(alive[:, None], p, np.nan)
    return xs, ps, ~alive


def tangent_leapfrog(code, prm, x, p, Y, dt, nsteps, periodic):
    """Advance state ``(x, p)`` and tangent frame ``Y`` (rows ``(dx, dp)``) in place."""
    prm = np.asarray(prm, dtype=float)
    n = x.shape[0]
    m = prm[0]
    h = 0.5 * dt
    dx = Y[:n]
    dp = Y[n:]
    c = _curv(code, prm, x)
    for _ in range(nsteps):
        p -= h * _force(code, prm, x)
        dp -= h * c[:, None] * dx
        x += dt * (p / m)
        dx += dt * (dp / m)
        if periodic:
            x[:] = _wrap(x)
        p -= h * _force(code, prm, x)
        c = _curv(code, prm, x)
        dp -= h * c[:, None] * dx


def _phi(r, limiter):
    if limiter == MINMOD:
        return np.maximum(0.0, np.minimum(1.0, r))
    if limiter == VAN_LEER:
        ar = np.abs(r)
        return (r + ar) / (1.0 + ar)
    if limiter == MC:
        return np.maximum(0.0, np.minimum(np.minimum(2.0 * r, 0.5 * (1.0 + r)), 2.0))
    return np.zeros_like(r)


def advect_lines(rho, vel, dt, h, axis, periodic, limiter):
    """One conservative flux-limited upwind sweep along ``axis``.

    ``rho`` has shape (nx, np); ``vel`` holds one constant velocity per line
    (per p-row for ``axis=0``, per x-column for ``axis=1``).
    Returns the updated density.
    """
    a = np.asarray(rho, dtype=float)
    if axis == 1:
        a = a.T
    a = np.ascontiguousarray(a)
    N = a.shape[0]
    v = np.asarray(vel, dtype=float)[None, :]
    c = v * dt / h
    if periodic:
        ext = np.concatenate([a[-2:], a, a[:2]], axis=0)
    else:
        ext = np.concatenate([a[:1], a[:1], a, a[-1:], a[-1:]], axis=0)
    # faces between cell i and i+1 for i = -1 .. N-1 (N+1 faces), in ext offsets
    left = ext[1:N + 2]
    right = ext[2:N + 3]
    lleft = ext[0:N + 1]
    rright = ext[3:N + 4]
    jump = right - left
    with np.errstate(divide="ignore", invalid="ignore"):
        r_pos = np.where(jump != 0, (left - lleft) / np.where(jump != 0, jump, 1.0), 0.0)
        r_neg = np.where(jump != 0, (rright - right) / np.where(jump != 0, jump, 1.0), 0.0)
    phi_pos = _phi(r_pos, limiter)
    phi_neg = _phi(r_neg, limiter)
    if not periodic:
        # first-order next to walls: no slope information from outside
        phi_pos[:2] = 0.0
        phi_neg[-2:] = 0.0
        phi_pos[-1] = 0.0
        phi_neg[0] = 0.0
    ac = np.abs(c)
    flux = np.where(
        v > 0,
        v * (left + 0.5 * (1.0 - ac) * phi_pos * jump),
        v * (right - 0.5 * (1.0 - ac) * phi_neg * jump),
    )
    if not periodic:
        flux[0] = 0.0
        flux[-1] = 0.0
    out = a - (dt / h) * (flux[1:] - flux[:-1])
    return out.T.copy() if axis == 1 else out


def diffuse(rho, Dx, Dp, dt, dx, dp, periodic_x, periodic_p):
    """Explicit conservative diffusion with per-column coefficients ``Dx``, ``Dp``."""
    a = np.asarray(rho, dtype=float)
    Dx = np.asarray(Dx, dtype=float)
    Dp = np.asarray(Dp, dtype=float)
    out = a.copy()
    # x direction, face conductance = mean of neighbouring cells
    if periodic_x:
        Df = 0.5 * (Dx + np.roll(Dx, -1))
        F = Df[:, None] * (a - np.roll(a, -1, axis=0)) / dx
        out += (dt / dx) * (np.roll(F, 1, axis=0) - F)
    else:
        Df = 0.5 * (Dx[:-1] + Dx[1:])
        F = Df[:, None] * (a[:-1] - a[1:]) / dx
        out[:-1] -= (dt / dx) * F
        out[1:] += (dt / dx) * F
    if periodic_p:
        G = Dp[:, None] * (a - np.roll(a, -1, axis=1)) / dp
        out += (dt / dp) * (np.roll(G, 1, axis=1) - G)
    else:
        G = Dp[:, None] * (a[:, :-1] - a[:, 1:]) / dp
        out[:, :-1] -= (dt / dp) * G
        out[:, 1:] += (dt / dp) * G
    return out
