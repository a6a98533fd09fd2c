"""Adaptive Dormand-Prince 5(4) integration of ``eta'' = -2 lam eta / c(x)``."""

import math

import numpy as np
from numba import njit, types

from .sigs import SCALAR_FN, VEC

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

OK, UNDERFLOW, MAXSTEPS = 0, 1, 2


@njit(cache=True, inline="always")
def _acc(c, lam, x, y):
    return -2.0 * lam * y / c(x)


def _integrate(c, lam, a, b, y0, dy0, tol, grid, out_y, out_dy, max_steps):
    """Integrate from ``a`` to ``b`` (either direction).

    ``grid`` lists points strictly between ``a`` and ``b`` ordered in the
    direction of integration; the solution and its derivative there are
    written to ``out_y`` and ``out_dy``.  Returns ``(y(b), y'(b), sign
    changes of y on (a, b], status)``.
    """
    direction = 1.0 if b > a else -1.0
    span = abs(b - a)
    x, y, v = a, y0, dy0
    h = direction * span * 1e-4
    cx = c(x)
    ky, kv = v, -2.0 * lam * y / cx
    zeros = 0
    gi = 0
    ng = grid.size
    last_sign = 0.0
    if y != 0.0:
        last_sign = 1.0 if y > 0 else -1.0
    steps = 0
    while direction * (b - x) > 0.0:
        steps += 1
        if steps > max_steps:
            return y, v, zeros, MAXSTEPS
        target = b
        if gi < ng:
            target = grid[gi]
        if direction * (x + h - target) > 0.0:
            h = target - x
        if abs(h) < 1e-15 * max(1.0, abs(x)):
            if direction * (target - x) <= 1e-15 * max(1.0, abs(x)):
                # already at a grid point
                x = target
            else:
                return y, v, zeros, UNDERFLOW
        # stages for the system (y, v)
        k1y, k1v = ky, kv
        y2 = y + h * _A21 * k1y
        v2 = v + h * _A21 * k1v
        k2y, k2v = v2, _acc(c, lam, x + _C2 * h, y2)
        y3 = y + h * (_A31 * k1y + _A32 * k2y)
        v3 = v + h * (_A31 * k1v + _A32 * k2v)
        k3y, k3v = v3, _acc(c, lam, x + _C3 * h, y3)
        y4 = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        v4 = v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v)
        k4y, k4v = v4, _acc(c, lam, x + _C4 * h, y4)
        y5 = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        v5 = v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v)
        k5y, k5v = v5, _acc(c, lam, x + _C5 * h, y5)
        y6 = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        v6 = v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v)
        k6y, k6v = v6, _acc(c, lam, x + h, y6)
        yn = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        vn = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        k7y, k7v = vn, _acc(c, lam, x + h, yn)
        ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        ev = h * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
        sy = tol * (1e-12 + max(abs(y), abs(yn)) + abs(h) * max(abs(v), abs(vn)))
        sv = tol * (1e-12 + max(abs(v), abs(vn)))
        err = math.sqrt(0.5 * ((ey / sy) ** 2 + (ev / sv) ** 2))
        if not math.isfinite(err):
            h *= 0.1
            continue
        if err <= 1.0:
            x_new = x + h
            hit = gi < ng and x_new == grid[gi]
            x, y, v = x_new, yn, vn
            ky, kv = k7y, k7v
            if y != 0.0:
                s = 1.0 if y > 0 else -1.0
                if last_sign != 0.0 and s != last_sign:
                    zeros += 1
                last_sign = s
            elif direction * (b - x) <= 0.0:
                zeros += 1
            if hit:
                out_y[gi] = y
                out_dy[gi] = v
                gi += 1
                while gi < ng and grid[gi] == x:
                    out_y[gi] = y
                    out_dy[gi] = v
                    gi += 1
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            h *= max(0.1, 0.9 * err ** -0.25)
    return y, v, zeros, OK


_FN = SCALAR_FN
_VEC = VEC
_SIG = types.Tuple((types.float64, types.float64, types.int64, types.int64))(
    _FN, types.float64, types.float64, types.float64, types.float64, types.float64,
    types.float64, _VEC, _VEC, _VEC, types.int64)
_integrate_jit = njit(_SIG, cache=True)(_integrate)

EMPTY = np.empty(0)


def integrate(c, lam, a, b, y0, dy0, tol, grid=EMPTY, out_y=EMPTY, out_dy=EMPTY, max_steps=2_000_000):
    """Python entry point; ``c`` must be compiled with signature ``float64(float64)``."""
    return _integrate_jit(c, float(lam), float(a), float(b), float(y0), float(dy0), float(tol),
                          grid, out_y, out_dy, int(max_steps))
