import numpy as np
import pytest

from forgekit.rng import generator_from_seed


@pytest.fixture
def rng():
    return generator_from_seed(20240101)


def finite_diff_grad(f, x, h=1e-3):
    """Central finite differences of scalar f over every component of x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic, fd):
    """Worst component error relative to the dominant gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(fd)), 1e-12)
    return float(np.max(np.abs(analytic - fd)) / scale)


def point_in_convex_polygon(px, py, vertices):
    """Inclusive point-in-convex-polygon via cross-product signs."""
    sign = 0
    n = len(vertices)
    for k in range(n):
        x1, y1 = vertices[k]
        x2, y2 = vertices[(k + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if abs(cross) < 1e-12:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True
