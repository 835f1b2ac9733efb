"""Dormand-Prince 5(4) stepping of many independent trajectories at once.

Each row of the state array carries its own independent variable, step
size and acceptance decision, so a row's trajectory never depends on
which other rows share the batch.  The Butcher tableau and the dense-output
polynomial are the ones shipped with :class:`scipy.integrate.RK45`.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import RK45

_A = np.zeros((7, 7))
_A[:6, :5] = RK45.A
_B = np.asarray(RK45.B)
_A[6, :6] = _B
_C = np.append(RK45.C, 1.0)
_E = np.asarray(RK45.E)
_P = np.asarray(RK45.P)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
SHRINK_ON_FAILURE = 0.25


class BatchDopri:
    """Adaptive DOPRI5 for a batch of ODE rows ``y' = fun(s, y)``.

    ``fun(s, y)`` receives ``s`` of shape ``(m,)`` and ``y`` of shape
    ``(m, d)`` and returns ``(dy, code)`` where ``code`` is an int array
    that is 0 where the right-hand side is defined and a positive reason
    code elsewhere.  Rows whose stages hit an undefined point have their
    step shrunk; once ``|h|`` drops below ``h_min``, or a row has hit
    undefined stages ``max_failures`` times, it is marked stalled with the
    last reason code.  The failure cap stops rows creeping along the edge
    of the domain with steps too small to change the state.
    """

    def __init__(self, fun, s0, y0, *, rtol, atol, direction=1.0, h_max=np.inf,
                 h_min=1e-12, first_step=None, max_failures=50):
        self.fun = fun
        self.y = np.array(y0, dtype=float, ndmin=2)
        m, d = self.y.shape
        self.s = np.broadcast_to(np.asarray(s0, dtype=float), (m,)).copy()
        self.rtol = rtol
        self.atol = np.broadcast_to(np.asarray(atol, dtype=float), (d,)).copy()
        self.direction = np.broadcast_to(np.sign(np.asarray(direction, dtype=float)), (m,)).copy()
        self.direction[self.direction == 0] = 1.0
        self.h_max = h_max
        self.h_min = h_min
        self.max_failures = max_failures
        self.failures = np.zeros(m, dtype=int)
        self.f, code = fun(self.s, self.y)
        self.stalled = code != 0
        self.reason = code.astype(int).copy()
        if first_step is None:
            h = self._initial_step()
        else:
            h = np.full(m, float(first_step))
        self.h = self.direction * np.minimum(np.abs(h), h_max)
        # data of the most recent accepted step, for dense output
        self.s_old = self.s.copy()
        self.y_old = self.y.copy()
        self.h_old = np.zeros(m)
        self.K_old = np.zeros((m, 7, d))

    def _scale(self, y):
        return self.atol + np.abs(y) * self.rtol

    def _initial_step(self):
        y, f = self.y, self.f
        ok = ~self.stalled
        sc = self._scale(y)
        d0 = np.sqrt(np.mean((y / sc) ** 2, axis=1))
        d1 = np.sqrt(np.mean((np.nan_to_num(f) / sc) ** 2, axis=1))
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
        h0 = np.minimum(h0, self.h_max)
        y1 = y + (self.direction * h0)[:, None] * np.nan_to_num(f)
        f1, code = self.fun(self.s + self.direction * h0, y1)
        d2 = np.sqrt(np.mean((np.nan_to_num(f1 - f) / sc) ** 2, axis=1)) / h0
        dmax = np.maximum(d1, d2)
        h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
        h = np.minimum(100 * h0, h1)
        h = np.where((code != 0) | ~ok, h0 * 0.1, h)
        return np.maximum(h, 10 * self.h_min)

    def attempt(self, rows, h_cap=None):
        """Try one step on ``rows``; returns a bool mask of accepted rows.

        ``h_cap`` optionally bounds ``|h|`` per row for this attempt
        (used to land exactly on an end point).
        """
        rows = np.asarray(rows, dtype=np.intp)
        if rows.size == 0:
            return np.zeros(0, dtype=bool)
        s = self.s[rows]
        y = self.y[rows]
        h = self.h[rows]
        if h_cap is not None:
            h = np.sign(h) * np.minimum(np.abs(h), h_cap)
        m, d = y.shape
        K = np.empty((m, 7, d))
        K[:, 0] = self.f[rows]
        bad = np.zeros(m, dtype=bool)
        codes = np.zeros(m, dtype=int)
        for k in range(1, 7):
            dy = np.einsum("j,mjd->md", _A[k, :k], K[:, :k]) * h[:, None]
            fk, ck = self.fun(s + _C[k] * h, y + dy)
            newly = (ck != 0) & ~bad
            codes[newly] = ck[newly]
            bad |= ck != 0
            K[:, k] = np.where(bad[:, None], 0.0, fk)
        y_new = y + h[:, None] * np.einsum("j,mjd->md", _B, K[:, :6])
        err_vec = h[:, None] * np.einsum("j,mjd->md", _E, K)
        scale = self.atol + np.maximum(np.abs(y), np.abs(y_new)) * self.rtol
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))
        err[bad] = np.inf
        err[~np.isfinite(err)] = np.inf
        accept = err <= 1.0

        with np.errstate(divide="ignore"):
            factor = np.where(err == 0, MAX_FACTOR, SAFETY * err ** -0.2)
        factor = np.clip(factor, MIN_FACTOR, MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        factor[bad] = SHRINK_ON_FAILURE
        h_next = h * factor
        h_next = np.sign(h_next) * np.minimum(np.abs(h_next), self.h_max)

        acc = rows[accept]
        if acc.size:
            self.s_old[acc] = s[accept]
            self.y_old[acc] = y[accept]
            self.h_old[acc] = h[accept]
            self.K_old[acc] = K[accept]
            self.s[acc] = s[accept] + h[accept]
            self.y[acc] = y_new[accept]
            self.f[acc] = K[accept, 6]
        self.h[rows] = h_next
        self.failures[rows[bad]] += 1
        stall = ~accept & ((np.abs(h_next) < self.h_min) | (self.failures[rows] > self.max_failures))
        if stall.any():
            srows = rows[stall]
            self.stalled[srows] = True
            self.reason[srows] = np.where(codes[stall] != 0, codes[stall], -1)
        return accept

    def dense(self, rows, s_query):
        """Dense-output values at ``s_query`` inside each row's last step."""
        rows = np.asarray(rows, dtype=np.intp)
        s_query = np.asarray(s_query, dtype=float)
        h = self.h_old[rows]
        theta = (s_query - self.s_old[rows]) / np.where(h == 0, 1.0, h)
        Q = np.einsum("mkd,kp->mdp", self.K_old[rows], _P)
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        return self.y_old[rows] + h[:, None] * np.einsum("mdp,mp->md", Q, powers)

    def dense_single(self, row, s_query):
        """Dense output for one row at several ``s`` values (shape ``(k, d)``)."""
        s_query = np.atleast_1d(np.asarray(s_query, dtype=float))
        h = self.h_old[row]
        theta = (s_query - self.s_old[row]) / (h if h != 0 else 1.0)
        Q = self.K_old[row].T @ _P  # (d, 4)
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        return self.y_old[row][None, :] + h * powers @ Q.T
