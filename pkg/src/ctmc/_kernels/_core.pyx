# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Fused leapfrog trajectories over the built-in potential families (Gaussian,
diagonal Gaussian mixture, Boltzmann relaxation, fixed-beta bridge and the
extended tempered system) plus Gray-code exhaustive enumeration of signed
Boltzmann machines. Mirrors the pure numpy implementations bit-for-bit in
structure, not in rounding; equivalence is asserted by tests at 1e-10.
"""

import numpy as np

from libc.math cimport exp, fabs, isfinite, log, log1p, sqrt, tanh

cdef double LOG_2PI = 1.8378770664093454835606594728112


cdef inline double _log_cosh(double a) noexcept nogil:
    cdef double aa = fabs(a)
    return aa + log1p(exp(-2.0 * aa)) - 0.69314718055994530941723212145818


cdef inline double _sigmoid(double u) noexcept nogil:
    cdef double e
    if u >= 0.0:
        return 1.0 / (1.0 + exp(-u))
    e = exp(u)
    return e / (1.0 + e)


cdef inline double _softplus(double u) noexcept nogil:
    cdef double m = u if u > 0.0 else 0.0
    return log1p(exp(-fabs(u))) + m


cdef class CPotential:
    cdef public int dim

    cdef double value(self, double[::1] q) noexcept nogil:
        return 0.0

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        pass

    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        self.grad(q, out)
        return self.value(q)


cdef class CGaussian(CPotential):
    cdef double[::1] mean
    cdef double[:, ::1] chol
    cdef double log_norm
    cdef double[::1] ybuf
    cdef double[::1] rbuf

    def __init__(self, mean, chol, log_norm):
        self.mean = np.array(mean, dtype=np.float64, order="C")
        self.chol = np.array(chol, dtype=np.float64, order="C")
        self.log_norm = log_norm
        self.dim = self.mean.shape[0]
        self.ybuf = np.empty(self.dim)
        self.rbuf = np.empty(self.dim)

    cdef void _forward_solve(self, double[::1] q) noexcept nogil:
        # ybuf <- L^-1 (q - mean)
        cdef int i, j
        cdef double acc
        for i in range(self.dim):
            acc = q[i] - self.mean[i]
            for j in range(i):
                acc -= self.chol[i, j] * self.ybuf[j]
            self.ybuf[i] = acc / self.chol[i, i]

    cdef double value(self, double[::1] q) noexcept nogil:
        cdef int i
        cdef double s = 0.0
        self._forward_solve(q)
        for i in range(self.dim):
            s += self.ybuf[i] * self.ybuf[i]
        return 0.5 * s + self.log_norm

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        # out <- L^-T ybuf = Sigma^-1 (q - mean)
        cdef int i, j
        cdef double acc
        self._forward_solve(q)
        for i in range(self.dim - 1, -1, -1):
            acc = self.ybuf[i]
            for j in range(i + 1, self.dim):
                acc -= self.chol[j, i] * out[j]
            out[i] = acc / self.chol[i, i]

    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i, j
        cdef double s = 0.0
        cdef double acc
        self._forward_solve(q)
        for i in range(self.dim):
            s += self.ybuf[i] * self.ybuf[i]
        for i in range(self.dim - 1, -1, -1):
            acc = self.ybuf[i]
            for j in range(i + 1, self.dim):
                acc -= self.chol[j, i] * out[j]
            out[i] = acc / self.chol[i, i]
        return 0.5 * s + self.log_norm


cdef class CGMMDiag(CPotential):
    cdef double[::1] log_w
    cdef double[:, ::1] means
    cdef double[:, ::1] variances
    cdef double[::1] log_norms
    cdef double[::1] lpbuf
    cdef int n_comp

    def __init__(self, log_w, means, variances):
        self.log_w = np.array(log_w, dtype=np.float64, order="C")
        self.means = np.array(means, dtype=np.float64, order="C")
        self.variances = np.array(variances, dtype=np.float64, order="C")
        self.n_comp = self.log_w.shape[0]
        self.dim = self.means.shape[1]
        ln = np.zeros(self.n_comp)
        for k in range(self.n_comp):
            ln[k] = 0.5 * np.sum(np.log(2.0 * np.pi * np.asarray(variances)[k]))
        self.log_norms = ln
        self.lpbuf = np.empty(self.n_comp)

    cdef void _log_posts(self, double[::1] q) noexcept nogil:
        cdef int k, i
        cdef double acc, d
        for k in range(self.n_comp):
            acc = 0.0
            for i in range(self.dim):
                d = q[i] - self.means[k, i]
                acc += d * d / self.variances[k, i]
            self.lpbuf[k] = self.log_w[k] - 0.5 * acc - self.log_norms[k]

    cdef double value(self, double[::1] q) noexcept nogil:
        cdef int k
        cdef double m, s
        self._log_posts(q)
        m = self.lpbuf[0]
        for k in range(1, self.n_comp):
            if self.lpbuf[k] > m:
                m = self.lpbuf[k]
        s = 0.0
        for k in range(self.n_comp):
            s += exp(self.lpbuf[k] - m)
        return -(m + log(s))

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int k, i
        cdef double m, s, r
        self._log_posts(q)
        m = self.lpbuf[0]
        for k in range(1, self.n_comp):
            if self.lpbuf[k] > m:
                m = self.lpbuf[k]
        s = 0.0
        for k in range(self.n_comp):
            s += exp(self.lpbuf[k] - m)
        for i in range(self.dim):
            out[i] = 0.0
        for k in range(self.n_comp):
            r = exp(self.lpbuf[k] - m) / s
            for i in range(self.dim):
                out[i] += r * (q[i] - self.means[k, i]) / self.variances[k, i]

    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int k, i
        cdef double m, s, r
        self._log_posts(q)
        m = self.lpbuf[0]
        for k in range(1, self.n_comp):
            if self.lpbuf[k] > m:
                m = self.lpbuf[k]
        s = 0.0
        for k in range(self.n_comp):
            s += exp(self.lpbuf[k] - m)
        for i in range(self.dim):
            out[i] = 0.0
        for k in range(self.n_comp):
            r = exp(self.lpbuf[k] - m) / s
            for i in range(self.dim):
                out[i] += r * (q[i] - self.means[k, i]) / self.variances[k, i]
        return -(m + log(s))


cdef class CRelaxation(CPotential):
    cdef double[:, ::1] Q
    cdef double[::1] b
    cdef double[::1] abuf
    cdef int n_units

    def __init__(self, Q, b):
        self.Q = np.array(Q, dtype=np.float64, order="C")
        self.b = np.array(b, dtype=np.float64, order="C")
        self.n_units = self.Q.shape[0]
        self.dim = self.Q.shape[1]
        self.abuf = np.empty(self.n_units)

    cdef void _activations(self, double[::1] q) noexcept nogil:
        cdef int i, j
        cdef double acc
        for i in range(self.n_units):
            acc = self.b[i]
            for j in range(self.dim):
                acc += self.Q[i, j] * q[j]
            self.abuf[i] = acc

    cdef double value(self, double[::1] q) noexcept nogil:
        cdef int i
        cdef double s = 0.0
        self._activations(q)
        for i in range(self.dim):
            s += q[i] * q[i]
        s *= 0.5
        for i in range(self.n_units):
            s -= _log_cosh(self.abuf[i])
        return s

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i, j
        cdef double t
        self._activations(q)
        for j in range(self.dim):
            out[j] = q[j]
        for i in range(self.n_units):
            t = tanh(self.abuf[i])
            for j in range(self.dim):
                out[j] -= self.Q[i, j] * t
    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i, j
        cdef double s = 0.0
        cdef double t
        self._activations(q)
        for j in range(self.dim):
            s += q[j] * q[j]
            out[j] = q[j]
        s *= 0.5
        for i in range(self.n_units):
            s -= _log_cosh(self.abuf[i])
            t = tanh(self.abuf[i])
            for j in range(self.dim):
                out[j] -= self.Q[i, j] * t
        return s


cdef class CBridge(CPotential):
    cdef public double beta
    cdef double log_zeta
    cdef CPotential target
    cdef CPotential base
    cdef double[::1] gbuf

    def __init__(self, beta, log_zeta, CPotential target, CPotential base):
        self.beta = beta
        self.log_zeta = log_zeta
        self.target = target
        self.base = base
        self.dim = target.dim
        self.gbuf = np.empty(self.dim)

    cdef double value(self, double[::1] q) noexcept nogil:
        return self.beta * (self.target.value(q) + self.log_zeta) \
            + (1.0 - self.beta) * self.base.value(q)

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i
        self.target.grad(q, out)
        self.base.grad(q, self.gbuf)
        for i in range(self.dim):
            out[i] = self.beta * out[i] + (1.0 - self.beta) * self.gbuf[i]

    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i
        cdef double phi = self.target.value_and_grad(q, out)
        cdef double psi = self.base.value_and_grad(q, self.gbuf)
        for i in range(self.dim):
            out[i] = self.beta * out[i] + (1.0 - self.beta) * self.gbuf[i]
        return self.beta * (phi + self.log_zeta) + (1.0 - self.beta) * psi


cdef class CExtended(CPotential):
    """Potential on (x, u): beta(u)(phi + log zeta) + (1-beta(u)) psi - log beta'(u)."""
    cdef double log_zeta
    cdef CPotential target
    cdef CPotential base
    cdef double[::1] xbuf
    cdef double[::1] gxbuf
    cdef double[::1] gbbuf
    cdef int xdim

    def __init__(self, log_zeta, CPotential target, CPotential base):
        self.log_zeta = log_zeta
        self.target = target
        self.base = base
        self.xdim = target.dim
        self.dim = target.dim + 1
        self.xbuf = np.empty(self.xdim)
        self.gxbuf = np.empty(self.xdim)
        self.gbbuf = np.empty(self.xdim)

    cdef double value(self, double[::1] q) noexcept nogil:
        cdef int i
        cdef double u, b
        for i in range(self.xdim):
            self.xbuf[i] = q[i]
        u = q[self.xdim]
        b = _sigmoid(u)
        return b * (self.target.value(self.xbuf) + self.log_zeta) \
            + (1.0 - b) * self.base.value(self.xbuf) \
            + _softplus(u) + _softplus(-u)

    cdef void grad(self, double[::1] q, double[::1] out) noexcept nogil:
        self.value_and_grad(q, out)

    cdef double value_and_grad(self, double[::1] q, double[::1] out) noexcept nogil:
        cdef int i
        cdef double u, b, bg, phi, psi, d
        for i in range(self.xdim):
            self.xbuf[i] = q[i]
        u = q[self.xdim]
        b = _sigmoid(u)
        bg = b * (1.0 - b)
        phi = self.target.value_and_grad(self.xbuf, self.gxbuf)
        psi = self.base.value_and_grad(self.xbuf, self.gbbuf)
        d = phi + self.log_zeta - psi
        for i in range(self.xdim):
            out[i] = b * self.gxbuf[i] + (1.0 - b) * self.gbbuf[i]
        out[self.xdim] = bg * d - (1.0 - 2.0 * b)
        return b * (phi + self.log_zeta) + (1.0 - b) * psi \
            + _softplus(u) + _softplus(-u)


def build_potential(spec):
    """Construct a compiled potential from a descriptor tuple."""
    kind = spec[0]
    if kind == "gaussian":
        return CGaussian(spec[1], spec[2], spec[3])
    if kind == "gmm_diag":
        return CGMMDiag(spec[1], spec[2], spec[3])
    if kind == "relaxation":
        return CRelaxation(spec[1], spec[2])
    if kind == "bridge":
        t = build_potential(spec[3])
        b = build_potential(spec[4])
        if t is None or b is None:
            return None
        return CBridge(spec[1], spec[2], t, b)
    if kind == "extended":
        t = build_potential(spec[2])
        b = build_potential(spec[3])
        if t is None or b is None:
            return None
        return CExtended(spec[1], t, b)
    return None


def set_bridge_beta(CBridge handle, double beta):
    handle.beta = beta


def bridge_phi_psi(CPotential handle, x):
    """(target potential, base potential) at x for bridge/extended handles."""
    cdef double[::1] xv = np.array(x, dtype=np.float64, order="C")
    cdef CBridge br
    cdef CExtended ex
    if isinstance(handle, CBridge):
        br = <CBridge> handle
        return br.target.value(xv), br.base.value(xv)
    ex = <CExtended> handle
    return ex.target.value(xv), ex.base.value(xv)


def extended_delta(CExtended handle, x):
    """phi(x) + log zeta - psi(x) through the compiled children."""
    cdef double[::1] xv = np.array(x, dtype=np.float64, order="C")
    return handle.target.value(xv) + handle.log_zeta - handle.base.value(xv)


def potential_value(CPotential handle, q):
    cdef double[::1] qv = np.array(q, dtype=np.float64, order="C")
    return handle.value(qv)


def potential_grad(CPotential handle, q):
    cdef double[::1] qv = np.array(q, dtype=np.float64, order="C")
    out = np.empty(handle.dim)
    cdef double[::1] ov = out
    handle.grad(qv, ov)
    return out


def leapfrog(CPotential pot, q0, p0, double step_size, int n_steps, mass_diag):
    """Fused leapfrog trajectory; returns (q, p, final_potential, diverged)."""
    q = np.array(q0, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    g = np.empty(pot.dim)
    inv_mass = 1.0 / np.ascontiguousarray(mass_diag, dtype=np.float64)
    cdef double[::1] qv = q
    cdef double[::1] pv = p
    cdef double[::1] gv = g
    cdef double[::1] imv = inv_mass
    cdef double eps = step_size
    cdef int d = pot.dim
    cdef int i, step
    cdef bint diverged = 0
    cdef double scale
    cdef double final_pot = 0.0

    with nogil:
        pot.grad(qv, gv)
        for i in range(d):
            if not isfinite(gv[i]):
                diverged = 1
        if not diverged:
            for i in range(d):
                pv[i] -= 0.5 * eps * gv[i]
            for step in range(n_steps):
                for i in range(d):
                    qv[i] += eps * pv[i] * imv[i]
                pot.grad(qv, gv)
                for i in range(d):
                    if not isfinite(gv[i]):
                        diverged = 1
                if diverged:
                    break
                scale = eps if step < n_steps - 1 else 0.5 * eps
                for i in range(d):
                    pv[i] -= scale * gv[i]
            if not diverged:
                for i in range(d):
                    if not (isfinite(qv[i]) and isfinite(pv[i])):
                        diverged = 1
                if not diverged:
                    final_pot = pot.value(qv)
    if diverged:
        return q, p, float("nan"), True
    return q, p, final_pot, False


def bm_enumerate(W_in, b_in):
    """Exact log Z and spin moments by Gray-code iteration over all states.

    Gray-code order gives O(n) incremental energy updates per state; two
    passes (max energy, then shifted accumulation) keep the reduction stable
    and deterministic.
    """
    W = np.array(W_in, dtype=np.float64, order="C")
    b = np.array(b_in, dtype=np.float64, order="C")
    cdef double[:, ::1] Wv = W
    cdef double[::1] bv = b
    cdef int n = b.shape[0]
    cdef unsigned long long n_states = (<unsigned long long> 1) << n
    cdef unsigned long long k, kk
    cdef int i, j, flip
    cdef double e, e_max, w, total

    s = np.ones(n)
    t = W @ s
    cdef double[::1] sv = s
    cdef double[::1] tv = t
    mean = np.zeros(n)
    second = np.zeros((n, n))
    cdef double[::1] meanv = mean
    cdef double[:, ::1] secondv = second

    # pass 1: maximum energy over all states
    e = 0.0
    for i in range(n):
        e += 0.5 * sv[i] * tv[i] + sv[i] * bv[i]
    e_max = e
    with nogil:
        for k in range(1, n_states):
            kk = k
            flip = 0
            while (kk & 1) == 0:
                kk >>= 1
                flip += 1
            e += -2.0 * sv[flip] * (tv[flip] + bv[flip])
            sv[flip] = -sv[flip]
            for i in range(n):
                tv[i] += 2.0 * sv[flip] * Wv[i, flip]
            if e > e_max:
                e_max = e

    # pass 2: accumulate exp(e - e_max)-weighted moments
    for i in range(n):
        sv[i] = 1.0
    t2 = W @ np.ones(n)
    for i in range(n):
        tv[i] = t2[i]
    e = 0.0
    for i in range(n):
        e += 0.5 * sv[i] * tv[i] + sv[i] * bv[i]
    total = 0.0
    with nogil:
        w = exp(e - e_max)
        total += w
        for i in range(n):
            meanv[i] += w * sv[i]
            for j in range(n):
                secondv[i, j] += w * sv[i] * sv[j]
        for k in range(1, n_states):
            kk = k
            flip = 0
            while (kk & 1) == 0:
                kk >>= 1
                flip += 1
            e += -2.0 * sv[flip] * (tv[flip] + bv[flip])
            sv[flip] = -sv[flip]
            for i in range(n):
                tv[i] += 2.0 * sv[flip] * Wv[i, flip]
            w = exp(e - e_max)
            total += w
            for i in range(n):
                meanv[i] += w * sv[i]
                for j in range(n):
                    secondv[i, j] += w * sv[i] * sv[j]

    log_z = e_max + np.log(total)
    mean /= total
    second /= total
    second = 0.5 * (second + second.T)
    np.fill_diagonal(second, 1.0)
    return float(log_z), mean, second
