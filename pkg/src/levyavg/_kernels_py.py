"""NumPy implementations of the stepping kernels.

Signatures mirror the compiled module exactly.  Every kernel works on a
batch of ``P`` independent paths (rows) so the Python loop runs over time
steps only.  State arrays are updated in place; ``fail[p]`` receives the
index of the first step producing a non-finite state, or stays -1.
"""

import math

import numpy as np

EULER, PREDICTOR_CORRECTOR, MARCUS_CLOSED = 0, 1, 2
MAP_ADDITIVE, MAP_EXPONENTIAL = 0, 1
# a drift step may move z by at most GUARD * max(1, |z|) before it is split
GUARD = 0.5
MAX_SUBSTEPS = 1048576.0


def _pa(c, x):
    return ((c[3] * x + c[2]) * x + c[1]) * x + c[0] + c[4] * np.abs(x)


def _dpa(c, x):
    return (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1] + c[4] * np.sign(x)


def cms_unit(r, w, alpha, beta, out):
    t = math.tan(math.pi * alpha / 2.0)
    bb = beta * t
    scale = (1.0 + bb * bb) ** (1.0 / (2.0 * alpha))
    shift = math.atan(bb) / alpha
    r = np.where(r == 0.0, 2.0 ** -54, r)
    zeta = math.pi * (r - 0.5)
    a = alpha * (zeta + shift)
    with np.errstate(divide="ignore", over="ignore"):
        out[:] = (scale * np.sin(a) / np.cos(zeta) ** (1.0 / alpha)
                  * (np.cos(zeta - a) / w) ** ((1.0 - alpha) / alpha))


def _mark_fail(fail, bad, i):
    hit = bad & (fail < 0)
    fail[hit] = i


def full_substeps(rhs, g2, ie, x, y, dt, heun):
    """Drift-only integration of one (x, y) path over dt in stable substeps.

    The substep is re-sized at every stage because the relaxation rate of y
    grows with |x| while x is still moving.
    """
    rem, floor = dt, dt / MAX_SUBSTEPS
    while rem > 0.0:
        fx, fy = rhs(x, y)
        r = max(abs(g2(x)) * ie, abs(fx) / max(1.0, abs(x)))
        tau = rem
        if r * tau > GUARD:
            tau = max(GUARD / r, floor)
        if heun:
            fxp, fyp = rhs(x + fx * tau, y + fy * tau)
            x = x + 0.5 * (fx + fxp) * tau
            y = y + 0.5 * (fy + fyp) * tau
        else:
            x = x + fx * tau
            y = y + fy * tau
        rem = rem - tau
    return x, y


def full_stiff(g2x, ie, x, fx, dt):
    return np.maximum(np.abs(g2x) * ie, np.abs(fx) / np.maximum(1.0, np.abs(x))) * dt > GUARD


def run_full(coef, prm, scheme, stride, state, dL, out, fail, guarded):
    """Joint (x, y) stepping of the fast-slow system.

    prm = (eps**-gamma, eps**gamma, 1/eps, eps**(gamma-1)*b, dt)
    """
    f1, f2, g1, g2 = coef
    eng, eg, ie, ny, dt = prm
    heun = scheme == PREDICTOR_CORRECTOR
    x = state[:, 0].copy()
    y = state[:, 1].copy()
    n = dL.shape[1]

    def rhs(x, y):
        return _pa(f1, x) + eng * _pa(f2, x) * y, (eg * _pa(g1, x) + _pa(g2, x) * y) * ie

    with np.errstate(all="ignore"):
        for i in range(n):
            noise = ny * dL[:, i]
            fx, fy = rhs(x, y)
            bad = full_stiff(_pa(g2, x), ie, x, fx, dt)
            if heun:
                xp = x + fx * dt
                yp = y + fy * dt + noise
                fxp, fyp = rhs(xp, yp)
                bad |= full_stiff(_pa(g2, xp), ie, xp, fxp, dt)
                xn = x + 0.5 * (fx + fxp) * dt
                yn = y + 0.5 * (fy + fyp) * dt + noise
            else:
                xn = x + fx * dt
                yn = y + fy * dt + noise
            for p in np.nonzero(bad)[0]:
                xs, ys = full_substeps(rhs, lambda z: _pa(g2, z), ie, float(x[p]), float(y[p]),
                                       dt, heun)
                xn[p], yn[p] = xs, ys + noise[p]
                guarded[p] += 1
            x, y = xn, yn
            _mark_fail(fail, ~(np.isfinite(x) & np.isfinite(y)), i)
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = x
    state[:, 0] = x
    state[:, 1] = y


def _drift(tab, z):
    return _pa(tab[0], z) - _pa(tab[1], z) * _pa(tab[2], z) / _pa(tab[3], z)


def _kappa(tab, scale, z):
    return scale * _pa(tab[4], z) / _pa(tab[5], z)


def _kappa_prime(tab, scale, z):
    e, f = _pa(tab[4], z), _pa(tab[5], z)
    return scale * (_dpa(tab[4], z) * f - e * _dpa(tab[5], z)) / (f * f)


def _h(tab, scale, wz, z):
    if wz != 0.0:
        return _drift(tab, z) + wz * _kappa(tab, scale, z) * _kappa_prime(tab, scale, z)
    return _drift(tab, z)


def _too_stiff(h, z, dt):
    return np.abs(h) * dt > GUARD * np.maximum(1.0, np.abs(z))


def _drift_substeps(tab, scale, wz, z, h, dt, heun):
    """Drift-only integration over dt split into enough substeps to stay stable."""
    m = float(np.ceil(abs(h) * dt / (GUARD * max(1.0, abs(z)))))
    if not m >= 1.0:
        m = 1.0
    m = min(m, MAX_SUBSTEPS)
    tau = dt / m
    z = np.float64(z)
    for _ in range(int(m)):
        hn = _h(tab, scale, wz, z)
        if heun:
            z = z + 0.5 * (hn + _h(tab, scale, wz, z + hn * tau)) * tau
        else:
            z = z + hn * tau
    return z


def run_reduced(tab, prm, map_kind, scheme, stride, state, dL, out, fail, guarded):
    """Scalar SDE stepping.

    prm = (scale, wz, map_k, dt).  ``wz`` multiplies the kappa*kappa'
    drift correction (0 for plain Ito).  ``map_k`` is the closed-form Marcus
    map constant: theta = z + k*dL (additive) or z*exp(k*dL) (exponential).
    A step whose drift would move z by more than GUARD*max(1, |z|) is
    replaced by substepped drift plus the noise term; ``guarded`` counts them.
    """
    scale, wz, mk, dt = prm
    z = state.copy()
    n = dL.shape[1]
    heun = scheme == PREDICTOR_CORRECTOR
    with np.errstate(all="ignore"):
        for i in range(n):
            d = dL[:, i]
            if scheme == MARCUS_CLOSED:
                h = _drift(tab, z)
                zd = z + h * dt
                bad = _too_stiff(h, z, dt)
                for p in np.nonzero(bad)[0]:
                    zd[p] = _drift_substeps(tab, scale, 0.0, z[p], h[p], dt, False)
                    guarded[p] += 1
                if map_kind == MAP_EXPONENTIAL:
                    z = zd * np.exp(mk * d)
                else:
                    z = zd + mk * d
            else:
                k = _kappa(tab, scale, z)
                h = _h(tab, scale, wz, z)
                bad = _too_stiff(h, z, dt)
                if heun:
                    zp = z + h * dt + k * d
                    hp = _h(tab, scale, wz, zp)
                    zn = z + 0.5 * (h + hp) * dt + k * d
                    bad = bad | _too_stiff(hp, zp, dt)
                else:
                    zn = z + h * dt + k * d
                for p in np.nonzero(bad)[0]:
                    zn[p] = _drift_substeps(tab, scale, wz, z[p], h[p], dt, heun) + k[p] * d[p]
                    guarded[p] += 1
                z = zn
            _mark_fail(fail, ~np.isfinite(z), i)
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = z
    state[:] = z


def jump_map_euler(tab, scale, z, jump, m):
    """Marcus flow d theta/dr = jump*kappa(theta) over r in [0, 1], m Euler substeps."""
    du = 1.0 / m
    th = z
    for _ in range(m):
        th = th + jump * _kappa(tab, scale, th) * du
    return th


def run_marcus_numeric(tab, prm, m, stride, state, dW, counts, jumps, out, fail):
    """Gaussian part with Wong-Zakai correction plus sequential jump maps.

    prm = (scale, eta, dt).  ``jumps[p]`` holds path p's jumps in step
    order; ``counts[p, i]`` of them belong to step i.
    """
    scale, eta, dt = prm
    z = state.copy()
    n = dW.shape[1]
    pos = np.zeros(z.shape[0], dtype=np.int64)
    half_eta2 = 0.5 * eta * eta
    with np.errstate(all="ignore"):
        for i in range(n):
            k = _kappa(tab, scale, z)
            zn = z + (_drift(tab, z) + half_eta2 * k * _kappa_prime(tab, scale, z)) * dt \
                + eta * k * dW[:, i]
            c = counts[:, i]
            if c.any():
                for p in np.nonzero(c)[0]:
                    zj = z[p]
                    for q in range(pos[p], pos[p] + c[p]):
                        zj = jump_map_euler(tab, scale, zj, jumps[p, q], m)
                    pos[p] += c[p]
                    zn[p] += zj - z[p]
            z = zn
            _mark_fail(fail, ~np.isfinite(z), i)
            if (i + 1) % stride == 0:
                out[:, (i + 1) // stride - 1] = z
    state[:] = z
