"""Independent reference computations used by several test files.

Nothing here imports the package's assembly or linearization code; the
closure formulas are restated from scratch.
"""

from __future__ import annotations

import numpy as np

GAMMA = 5.0 / 3.0


def polytropic(p, S, gamma=GAMMA):
    rho = (p * np.exp(-S)) ** (1.0 / gamma)
    energy = p / ((gamma - 1.0) * rho)
    return rho, energy


def conservation_fluxes(U, eps, d, gamma=GAMMA):
    """Conserved densities and fluxes of relativistic MHD in terms of
    ``U = (q, v, H, S)``: mass, energy, momentum and magnetic field."""
    q = U[0]
    v = U[1 : 1 + d]
    H = U[1 + d : 1 + 2 * d]
    S = U[-1]
    G2 = 1.0 / (1.0 - eps**2 * (v @ v))
    vH = v @ H
    H2 = H @ H
    p = q - 0.5 * H2 / G2 - 0.5 * eps**2 * vH**2
    rho, energy = polytropic(p, S, gamma)
    f = 1.0 + eps**2 * (energy + p / rho)
    G = np.sqrt(G2)
    m = rho * f * G2 * v + eps**2 * H2 * v - eps**2 * vH * H
    F0 = np.concatenate([[rho * G, rho * f * G2 + eps**2 * H2 - eps**2 * q], m, H])
    fluxes = []
    for j in range(d):
        ej = np.eye(d)[j]
        mom = (
            -H * H[j] / G2
            + q * ej
            + (rho * f * G2 + eps**2 * H2) * v * v[j]
            - eps**2 * vH * (H * v[j] + v * H[j])
        )
        fluxes.append(np.concatenate([[rho * G * v[j], m[j]], mom, v[j] * H - v * H[j]]))
    return F0, fluxes


def complex_step_jacobian(fun, x, h=1e-20):
    x = np.asarray(x, float)
    cols = []
    for k in range(x.size):
        xc = x.astype(complex)
        xc[k] += 1j * h
        cols.append(np.imag(fun(xc)) / h)
    return np.array(cols).T


def conservative_matrices(U, eps, d, gamma=GAMMA):
    """``(dF0)^-1 dFj`` for each direction."""
    dF0 = complex_step_jacobian(lambda x: conservation_fluxes(x, eps, d, gamma)[0], U)
    out = []
    for j in range(d):
        dFj = complex_step_jacobian(lambda x, j=j: conservation_fluxes(x, eps, d, gamma)[1][j], U)
        out.append(np.linalg.solve(dF0, dFj))
    return out


def fornberg_weights(z, x, m):
    """Finite-difference weights for derivatives up to order ``m`` at ``z``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def loglog_slope(h, err):
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])
