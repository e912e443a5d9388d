"""Independent oracles for the network economy tests."""

import numpy as np

from gwfunctor.economy import (NetworkEconomy, economy_map, producer_utilities,
                               transporter_utilities)


def fd_jacobian_rows(econ: NetworkEconomy, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Each F component as a central difference of its owner's negative utility."""
    N = econ.size
    out = np.empty(econ.dim)
    idx = np.arange(N).reshape(econ.shape)
    for flat in range(econ.dim):
        block, r = divmod(flat, N)
        i, j, _ = np.unravel_index(r, econ.shape)
        e = np.zeros(econ.dim)
        e[flat] = h
        if block == 0:
            u = lambda y: producer_utilities(econ, y)[i]
        else:
            u = lambda y: transporter_utilities(econ, y)[j]
        out[flat] = -(u(x + e) - u(x - e)) / (2 * h)
    return out


def grid_equilibria_111(econ: NetworkEconomy, points: int = 200) -> list[tuple]:
    """Grid Nash equilibria of a 1x1x1 economy.

    For every producer flow Q on the grid, the transporter's grid best
    response (q, π) is found by exhaustive search; then the producer's grid
    best response to that (q, π).  Grid points where the producer's answer
    comes back to Q (within one cell) are equilibria of the grid game.
    """
    assert econ.shape == (1, 1, 1)
    Qg = np.linspace(0, econ.cap_Q, points)
    qg = np.linspace(0, econ.cap_q, points)
    pg = np.linspace(0, econ.cap_pi, points)
    cell = Qg[1] - Qg[0]
    found = []
    for Q in Qg:
        # transporter utility over the full (q, π) grid at this Q
        qq, pp = np.meshgrid(qg, pg, indexing="ij")
        X = np.stack([np.full(qq.size, Q), qq.ravel(), pp.ravel()], axis=1)
        u2 = transporter_utilities(econ, X)[:, 0]
        best = int(np.argmax(u2))
        q, p = X[best, 1], X[best, 2]
        Y = np.stack([Qg, np.full(points, q), np.full(points, p)], axis=1)
        u1 = producer_utilities(econ, Y)[:, 0]
        Qb = Qg[int(np.argmax(u1))]
        if abs(Qb - Q) <= cell + 1e-12:
            found.append((Q, q, p))
    return found
