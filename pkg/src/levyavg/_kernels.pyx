# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels; see _kernels_py for the reference semantics."""

from libc.math cimport sin, cos, tan, atan, pow, exp, fabs, fmax, ceil, isfinite, M_PI

cdef enum:
    EULER = 0
    PREDICTOR_CORRECTOR = 1
    MARCUS_CLOSED = 2
    MAP_ADDITIVE = 0
    MAP_EXPONENTIAL = 1

# a drift step may move z by at most GUARD * max(1, |z|) before it is split
cdef double GUARD = 0.5
cdef double MAX_SUBSTEPS = 1048576.0


cdef inline double _sgn(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef inline double _pa(const double* c, double x) noexcept nogil:
    return ((c[3] * x + c[2]) * x + c[1]) * x + c[0] + c[4] * fabs(x)


cdef inline double _dpa(const double* c, double x) noexcept nogil:
    return (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1] + c[4] * _sgn(x)


def cms_unit(const double[::1] r, const double[::1] w, double alpha, double beta, double[::1] out):
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double t = tan(M_PI * alpha / 2.0)
    cdef double bb = beta * t
    cdef double scale = pow(1.0 + bb * bb, 1.0 / (2.0 * alpha))
    cdef double shift = atan(bb) / alpha
    cdef double ia = 1.0 / alpha
    cdef double e = (1.0 - alpha) / alpha
    cdef double ri, zeta, a
    with nogil:
        for i in range(n):
            ri = r[i]
            if ri == 0.0:
                ri = 5.551115123125783e-17
            zeta = M_PI * (ri - 0.5)
            a = alpha * (zeta + shift)
            out[i] = scale * sin(a) / pow(cos(zeta), ia) * pow(cos(zeta - a) / w[i], e)


cdef inline double _fast_rate(const double* g2, double ie, double x, double fx) noexcept nogil:
    # relaxation rate of y and relative rate of x; a step is split when rate * dt > GUARD
    return fmax(fabs(_pa(g2, x)) * ie, fabs(fx) / fmax(1.0, fabs(x)))


cdef void _full_substeps(const double* f1, const double* f2, const double* g1,
                         const double* g2, double eng, double eg, double ie, double dt,
                         bint heun, double* xs, double* ys) noexcept nogil:
    cdef double x = xs[0], y = ys[0], rem = dt, floor = dt / MAX_SUBSTEPS
    cdef double fx, fy, xp, yp, r, tau
    while rem > 0.0:
        fx = _pa(f1, x) + eng * _pa(f2, x) * y
        fy = (eg * _pa(g1, x) + _pa(g2, x) * y) * ie
        r = _fast_rate(g2, ie, x, fx)
        tau = rem
        if r * tau > GUARD:
            tau = fmax(GUARD / r, floor)
        if heun:
            xp = x + fx * tau
            yp = y + fy * tau
            x = x + 0.5 * (fx + _pa(f1, xp) + eng * _pa(f2, xp) * yp) * tau
            y = y + 0.5 * (fy + (eg * _pa(g1, xp) + _pa(g2, xp) * yp) * ie) * tau
        else:
            x = x + fx * tau
            y = y + fy * tau
        rem = rem - tau
    xs[0] = x
    ys[0] = y


def run_full(const double[:, ::1] coef, prm, int scheme, Py_ssize_t stride,
             double[:, ::1] state, const double[:, ::1] dL, double[:, ::1] out,
             long long[::1] fail, long long[::1] guarded):
    cdef const double* f1 = &coef[0, 0]
    cdef const double* f2 = &coef[1, 0]
    cdef const double* g1 = &coef[2, 0]
    cdef const double* g2 = &coef[3, 0]
    cdef double eng = prm[0], eg = prm[1], ie = prm[2], ny = prm[3], dt = prm[4]
    cdef Py_ssize_t p, i, n = dL.shape[1], P = dL.shape[0]
    cdef double x, y, noise, fx, fy, xp, yp, fxp, fyp
    cdef bint heun = scheme == PREDICTOR_CORRECTOR
    with nogil:
        for p in range(P):
            x = state[p, 0]
            y = state[p, 1]
            for i in range(n):
                noise = ny * dL[p, i]
                fx = _pa(f1, x) + eng * _pa(f2, x) * y
                fy = (eg * _pa(g1, x) + _pa(g2, x) * y) * ie
                if _fast_rate(g2, ie, x, fx) * dt > GUARD:
                    _full_substeps(f1, f2, g1, g2, eng, eg, ie, dt, heun, &x, &y)
                    y = y + noise
                    guarded[p] += 1
                elif heun:
                    xp = x + fx * dt
                    yp = y + fy * dt + noise
                    fxp = _pa(f1, xp) + eng * _pa(f2, xp) * yp
                    if _fast_rate(g2, ie, xp, fxp) * dt > GUARD:
                        _full_substeps(f1, f2, g1, g2, eng, eg, ie, dt, heun, &x, &y)
                        y = y + noise
                        guarded[p] += 1
                    else:
                        fyp = (eg * _pa(g1, xp) + _pa(g2, xp) * yp) * ie
                        x = x + 0.5 * (fx + fxp) * dt
                        y = y + 0.5 * (fy + fyp) * dt + noise
                else:
                    x = x + fx * dt
                    y = y + fy * dt + noise
                if fail[p] < 0 and not (isfinite(x) and isfinite(y)):
                    fail[p] = i
                if (i + 1) % stride == 0:
                    out[p, (i + 1) // stride - 1] = x
            state[p, 0] = x
            state[p, 1] = y


cdef inline double _drift(const double* t, double z) noexcept nogil:
    return _pa(t, z) - _pa(t + 5, z) * _pa(t + 10, z) / _pa(t + 15, z)


cdef inline double _kappa(const double* t, double scale, double z) noexcept nogil:
    return scale * _pa(t + 20, z) / _pa(t + 25, z)


cdef inline double _kappa_prime(const double* t, double scale, double z) noexcept nogil:
    cdef double e = _pa(t + 20, z)
    cdef double f = _pa(t + 25, z)
    return scale * (_dpa(t + 20, z) * f - e * _dpa(t + 25, z)) / (f * f)


cdef inline double _h(const double* t, double scale, double wz, double z) noexcept nogil:
    if wz != 0.0:
        return _drift(t, z) + wz * _kappa(t, scale, z) * _kappa_prime(t, scale, z)
    return _drift(t, z)


cdef inline bint _too_stiff(double h, double z, double dt) noexcept nogil:
    return fabs(h) * dt > GUARD * fmax(1.0, fabs(z))


cdef double _drift_substeps(const double* t, double scale, double wz, double z, double h,
                            double dt, bint heun) noexcept nogil:
    cdef double m = ceil(fabs(h) * dt / (GUARD * fmax(1.0, fabs(z))))
    cdef double tau, hn
    cdef long long j, nm
    if not m >= 1.0:
        m = 1.0
    if m > MAX_SUBSTEPS:
        m = MAX_SUBSTEPS
    nm = <long long>m
    tau = dt / m
    for j in range(nm):
        hn = _h(t, scale, wz, z)
        if heun:
            z = z + 0.5 * (hn + _h(t, scale, wz, z + hn * tau)) * tau
        else:
            z = z + hn * tau
    return z


def run_reduced(const double[:, ::1] tab_, prm, int map_kind, int scheme, Py_ssize_t stride,
                double[::1] state, const double[:, ::1] dL, double[:, ::1] out,
                long long[::1] fail, long long[::1] guarded):
    cdef const double* tab = &tab_[0, 0]
    cdef double scale = prm[0], wz = prm[1], mk = prm[2], dt = prm[3]
    cdef Py_ssize_t p, i, n = dL.shape[1], P = dL.shape[0]
    cdef double z, d, h, k, zd, zp, hp
    with nogil:
        for p in range(P):
            z = state[p]
            for i in range(n):
                d = dL[p, i]
                if scheme == MARCUS_CLOSED:
                    h = _drift(tab, z)
                    if _too_stiff(h, z, dt):
                        zd = _drift_substeps(tab, scale, 0.0, z, h, dt, False)
                        guarded[p] += 1
                    else:
                        zd = z + h * dt
                    if map_kind == MAP_EXPONENTIAL:
                        z = zd * exp(mk * d)
                    else:
                        z = zd + mk * d
                else:
                    k = _kappa(tab, scale, z)
                    h = _h(tab, scale, wz, z)
                    if _too_stiff(h, z, dt):
                        z = _drift_substeps(tab, scale, wz, z, h, dt,
                                            scheme == PREDICTOR_CORRECTOR) + k * d
                        guarded[p] += 1
                    elif scheme == PREDICTOR_CORRECTOR:
                        zp = z + h * dt + k * d
                        hp = _h(tab, scale, wz, zp)
                        if _too_stiff(hp, zp, dt):
                            z = _drift_substeps(tab, scale, wz, z, h, dt, True) + k * d
                            guarded[p] += 1
                        else:
                            z = z + 0.5 * (h + hp) * dt + k * d
                    else:
                        z = z + h * dt + k * d
                if fail[p] < 0 and not isfinite(z):
                    fail[p] = i
                if (i + 1) % stride == 0:
                    out[p, (i + 1) // stride - 1] = z
            state[p] = z


cdef inline double _jump_map(const double* tab, double scale, double z,
                             double jump, int m) noexcept nogil:
    cdef double du = 1.0 / m
    cdef double th = z
    cdef int j
    for j in range(m):
        th = th + jump * _kappa(tab, scale, th) * du
    return th


def jump_map_euler(const double[:, ::1] tab, double scale, double z, double jump, int m):
    return _jump_map(&tab[0, 0], scale, z, jump, m)


def run_marcus_numeric(const double[:, ::1] tab_, prm, int m, Py_ssize_t stride,
                       double[::1] state, const double[:, ::1] dW, const long long[:, ::1] counts,
                       const double[:, ::1] jumps, double[:, ::1] out, long long[::1] fail):
    cdef const double* tab = &tab_[0, 0]
    cdef double scale = prm[0], eta = prm[1], dt = prm[2]
    cdef double half_eta2 = 0.5 * eta * eta
    cdef Py_ssize_t p, i, q, pos, n = dW.shape[1], P = dW.shape[0]
    cdef double z, zn, zj, k
    with nogil:
        for p in range(P):
            z = state[p]
            pos = 0
            for i in range(n):
                k = _kappa(tab, scale, z)
                zn = z + (_drift(tab, z) + half_eta2 * k * _kappa_prime(tab, scale, z)) * dt \
                    + eta * k * dW[p, i]
                if counts[p, i] > 0:
                    zj = z
                    for q in range(pos, pos + counts[p, i]):
                        zj = _jump_map(tab, scale, zj, jumps[p, q], m)
                    pos += counts[p, i]
                    zn = zn + (zj - z)
                z = zn
                if fail[p] < 0 and not isfinite(z):
                    fail[p] = i
                if (i + 1) % stride == 0:
                    out[p, (i + 1) // stride - 1] = z
            state[p] = z
