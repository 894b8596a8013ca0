"""Reference tables for the bilinear element on a square cell.

Node order is SW, SE, NE, NW on the unit reference square.  The
stiffness table is mesh-size independent in 2D; the mass table scales
with h^2.  Quadrature is the 2x2 Gauss rule (exact for the bilinear
mass integrands used here).
"""

import numpy as np

# \int grad(N_a) . grad(N_b) on the unit square
K_REF = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0

# \int N_a N_b on the unit square
M_REF = np.array([
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
]) / 36.0

GAUSS_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])

# 2x2 tensor rule on the unit square, weights 1/4 each
GAUSS_2D = np.array([[gx, gy] for gy in GAUSS_1D for gx in GAUSS_1D])
GAUSS_2D_W = np.full(4, 0.25)


def shape(points):
    """Shape function values at reference points, shape (npts, 4)."""
    p = np.atleast_2d(points)
    x, y = p[:, 0], p[:, 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=1)


def grad(points):
    """Reference gradients at points, shape (npts, 4, 2); divide by h."""
    p = np.atleast_2d(points)
    x, y = p[:, 0], p[:, 1]
    gx = np.stack([-(1 - y), (1 - y), y, -y], axis=1)
    gy = np.stack([-(1 - x), -x, x, (1 - x)], axis=1)
    return np.stack([gx, gy], axis=2)


SHAPE_G = shape(GAUSS_2D)          # (4 gauss, 4 nodes)
GRAD_G = grad(GAUSS_2D)            # (4 gauss, 4 nodes, 2)
