# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernel.

Statement-for-statement mirror of ``aolcorr.kernels._purepy`` (same parameter
vector layout, tableau, and step control); keep the two in sync. See the
pure-Python module for the documentation of record.
"""

from libc.math cimport sqrt, exp, sin, cos, fabs, pow

# params vector layout (must match _purepy)
cdef enum:
    IDX_MU = 0
    IDX_RE = 1
    IDX_J2 = 2
    IDX_J3 = 3
    IDX_J4 = 4
    IDX_DRAG = 5
    IDX_BC = 6
    IDX_RHO_SCALE = 7
    IDX_KAPPA = 8
    IDX_F10 = 9
    IDX_SRP = 10
    IDX_SRP_COEFF = 11
    IDX_OMEGA = 12
    IDX_DECAY_ALT = 13
    IDX_SUN_LON0 = 14
    IDX_SUN_RATE = 15
    IDX_SUN_OBLIQUITY = 16
    IDX_SRP_ACCEL = 17
    IDX_F10_REF = 18
    IDX_N_BANDS = 19
    IDX_TABLE = 20

STATUS_OK = 0
STATUS_DECAY = 1
STATUS_UNDERFLOW = 2

cdef double FD_DR = 1e-4
cdef double FD_DV = 1e-4

cdef double _A21 = 1.0 / 5.0
cdef double _A31 = 3.0 / 40.0, _A32 = 9.0 / 40.0
cdef double _A41 = 44.0 / 45.0, _A42 = -56.0 / 15.0, _A43 = 32.0 / 9.0
cdef double _A51 = 19372.0 / 6561.0, _A52 = -25360.0 / 2187.0
cdef double _A53 = 64448.0 / 6561.0, _A54 = -212.0 / 729.0
cdef double _A61 = 9017.0 / 3168.0, _A62 = -355.0 / 33.0, _A63 = 46732.0 / 5247.0
cdef double _A64 = 49.0 / 176.0, _A65 = -5103.0 / 18656.0
cdef double _B1 = 35.0 / 384.0, _B3 = 500.0 / 1113.0, _B4 = 125.0 / 192.0
cdef double _B5 = -2187.0 / 6784.0, _B6 = 11.0 / 84.0
cdef double _E1 = 71.0 / 57600.0, _E3 = -71.0 / 16695.0, _E4 = 71.0 / 1920.0
cdef double _E5 = -17253.0 / 339200.0, _E6 = 22.0 / 525.0, _E7 = -1.0 / 40.0


cdef double _density(double alt_km, const double[::1] p) noexcept nogil:
    cdef int n_bands = <int> p[IDX_N_BANDS]
    cdef int lo = 0, hi = n_bands - 1, mid
    cdef double rho, f10_fac
    if alt_km < 0.0:
        alt_km = 0.0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if p[IDX_TABLE + 3 * mid] <= alt_km:
            lo = mid
        else:
            hi = mid - 1
    cdef int base = IDX_TABLE + 3 * lo
    rho = p[base + 1] * exp(-(alt_km - p[base]) / p[base + 2])
    f10_fac = 1.0 + p[IDX_KAPPA] * (p[IDX_F10] - p[IDX_F10_REF]) / p[IDX_F10_REF]
    if f10_fac < 0.0:
        f10_fac = 0.0
    return rho * p[IDX_RHO_SCALE] * f10_fac


cdef void _accel_static(double t, double x, double y, double z,
                        const double[::1] p, double* out) noexcept nogil:
    cdef double mu = p[IDX_MU]
    cdef double re = p[IDX_RE]
    cdef double r2 = x * x + y * y + z * z
    cdef double r = sqrt(r2)
    cdef double r3 = r2 * r
    cdef double c = -mu / r3
    cdef double ax = c * x
    cdef double ay = c * y
    cdef double az = c * z
    cdef double j2 = p[IDX_J2]
    cdef double j3 = p[IDX_J3]
    cdef double j4 = p[IDX_J4]
    cdef double r5, r7, zr2, z2r2, zr4, k2, q3, q4
    cdef double lon, eps, sx, sy, sz, k

    if j2 != 0.0:
        r5 = r2 * r3
        zr2 = z * z / r2
        k2 = 1.5 * j2 * mu * re * re / r5
        ax += -k2 * x * (1.0 - 5.0 * zr2)
        ay += -k2 * y * (1.0 - 5.0 * zr2)
        az += -k2 * z * (3.0 - 5.0 * zr2)
    if j3 != 0.0:
        r7 = r2 * r2 * r2 * r
        q3 = mu * j3 * re * re * re / (2.0 * r7)
        z2r2 = z * z / r2
        ax += -q3 * x * (15.0 * z - 35.0 * z * z2r2)
        ay += -q3 * y * (15.0 * z - 35.0 * z * z2r2)
        az += -q3 * (30.0 * z * z - 35.0 * z * z * z2r2 - 3.0 * r2)
    if j4 != 0.0:
        r7 = r2 * r2 * r2 * r
        zr2 = z * z / r2
        zr4 = zr2 * zr2
        q4 = 15.0 * mu * j4 * re * re * re * re / (8.0 * r7)
        ax += q4 * x * (1.0 - 14.0 * zr2 + 21.0 * zr4)
        ay += q4 * y * (1.0 - 14.0 * zr2 + 21.0 * zr4)
        az += q4 * z * (5.0 - 70.0 / 3.0 * zr2 + 21.0 * zr4)

    if p[IDX_SRP] != 0.0:
        lon = p[IDX_SUN_LON0] + p[IDX_SUN_RATE] * t
        eps = p[IDX_SUN_OBLIQUITY]
        sx = cos(lon)
        sy = sin(lon) * cos(eps)
        sz = sin(lon) * sin(eps)
        k = p[IDX_SRP_ACCEL] * p[IDX_SRP_COEFF]
        ax -= k * sx
        ay -= k * sy
        az -= k * sz
    out[0] = ax
    out[1] = ay
    out[2] = az


cdef void _accel_drag(double x, double y, double z,
                      double vx, double vy, double vz,
                      const double[::1] p, double* out) noexcept nogil:
    cdef double r = sqrt(x * x + y * y + z * z)
    cdef double rho = _density(r - p[IDX_RE], p)
    cdef double w, ux, uy, uz, un, k
    if rho == 0.0:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return
    w = p[IDX_OMEGA]
    ux = vx + w * y
    uy = vy - w * x
    uz = vz
    un = sqrt(ux * ux + uy * uy + uz * uz)
    k = -500.0 * rho * p[IDX_BC] * un
    out[0] = k * ux
    out[1] = k * uy
    out[2] = k * uz


cdef void _rhs(double t, const double* y, const double[::1] p,
               bint with_stm, double* dy) noexcept nogil:
    cdef double x = y[0], yy = y[1], z = y[2]
    cdef double vx = y[3], vy = y[4], vz = y[5]
    cdef bint drag_on = p[IDX_DRAG] != 0.0
    cdef double a[3]
    cdef double ad[3]
    cdef double ah[3]
    cdef double al[3]
    cdef double dh[3]
    cdef double dl[3]
    cdef double g[3][3]
    cdef double d[3][3]
    cdef double pos[3]
    cdef double vel[3]
    cdef double inv, acc, base
    cdef int axis, i, j, kk

    _accel_static(t, x, yy, z, p, a)
    if drag_on:
        _accel_drag(x, yy, z, vx, vy, vz, p, ad)
        a[0] += ad[0]
        a[1] += ad[1]
        a[2] += ad[2]
    dy[0] = vx
    dy[1] = vy
    dy[2] = vz
    dy[3] = a[0]
    dy[4] = a[1]
    dy[5] = a[2]
    if not with_stm:
        return

    pos[0] = x
    pos[1] = yy
    pos[2] = z
    vel[0] = vx
    vel[1] = vy
    vel[2] = vz
    for axis in range(3):
        base = pos[axis]
        pos[axis] = base + FD_DR
        _accel_static(t, pos[0], pos[1], pos[2], p, ah)
        if drag_on:
            _accel_drag(pos[0], pos[1], pos[2], vx, vy, vz, p, dh)
            ah[0] += dh[0]
            ah[1] += dh[1]
            ah[2] += dh[2]
        pos[axis] = base - FD_DR
        _accel_static(t, pos[0], pos[1], pos[2], p, al)
        if drag_on:
            _accel_drag(pos[0], pos[1], pos[2], vx, vy, vz, p, dl)
            al[0] += dl[0]
            al[1] += dl[1]
            al[2] += dl[2]
        pos[axis] = base
        inv = 0.5 / FD_DR
        g[0][axis] = (ah[0] - al[0]) * inv
        g[1][axis] = (ah[1] - al[1]) * inv
        g[2][axis] = (ah[2] - al[2]) * inv
    for i in range(3):
        for j in range(3):
            d[i][j] = 0.0
    if drag_on:
        for axis in range(3):
            base = vel[axis]
            vel[axis] = base + FD_DV
            _accel_drag(x, yy, z, vel[0], vel[1], vel[2], p, dh)
            vel[axis] = base - FD_DV
            _accel_drag(x, yy, z, vel[0], vel[1], vel[2], p, dl)
            vel[axis] = base
            inv = 0.5 / FD_DV
            d[0][axis] = (dh[0] - dl[0]) * inv
            d[1][axis] = (dh[1] - dl[1]) * inv
            d[2][axis] = (dh[2] - dl[2]) * inv

    for i in range(3):
        for j in range(6):
            dy[6 + 6 * i + j] = y[6 + 6 * (i + 3) + j]
    for i in range(3):
        for j in range(6):
            acc = 0.0
            for kk in range(3):
                acc += g[i][kk] * y[6 + 6 * kk + j] + d[i][kk] * y[6 + 6 * (kk + 3) + j]
            dy[6 + 6 * (i + 3) + j] = acc


def atmosphere_density(double alt_km, const double[::1] params):
    """Piecewise-exponential density, kg/m^3 (see _purepy)."""
    return _density(alt_km, params)


def accel_eci(double t, y, const double[::1] params):
    """Total acceleration (km/s^2) at time t for state y = [r; v]."""
    cdef double out[3]
    cdef double drag[3]
    cdef double x = y[0], yy = y[1], z = y[2]
    cdef double vx = y[3], vy = y[4], vz = y[5]
    _accel_static(t, x, yy, z, params, out)
    if params[IDX_DRAG] != 0.0:
        _accel_drag(x, yy, z, vx, vy, vz, params, drag)
        out[0] += drag[0]
        out[1] += drag[1]
        out[2] += drag[2]
    return out[0], out[1], out[2]


def integrate(
    double t0,
    y0,
    const double[::1] targets,
    const double[::1] params,
    double rtol,
    double atol_pos,
    double atol_vel,
    double min_step,
    double max_step,
    bint with_stm,
    double[:, ::1] out_states,
    out_stms,
):
    """Adaptive DP5(4) integration; see _purepy.integrate for the contract."""
    cdef int n_targets = targets.shape[0]
    cdef int dim = 42 if with_stm else 6
    cdef double y[42]
    cdef double k1[42]
    cdef double k2[42]
    cdef double k3[42]
    cdef double k4[42]
    cdef double k5[42]
    cdef double k6[42]
    cdef double k7[42]
    cdef double ytmp[42]
    cdef double ynew[42]
    cdef double* swp
    cdef int i, next_target = 0
    cdef long n_steps = 0, n_rhs = 0
    cdef double err_accum = 0.0
    cdef double t = t0
    cdef double direction, h, remaining, err_sq, err_pos, err_vel, e, atol, ay0, ay1, sc
    cdef double err, fac, t_new, target, r_now
    cdef double decay_alt = params[IDX_DECAY_ALT]
    cdef double re = params[IDX_RE]
    cdef double[:, ::1] stms_view
    cdef bint have_stms = out_stms is not None
    if have_stms:
        stms_view = out_stms

    for i in range(dim):
        y[i] = 0.0
    for i in range(6):
        y[i] = y0[i]
    if with_stm:
        for i in range(6):
            y[6 + 6 * i + i] = 1.0

    while next_target < n_targets and targets[next_target] == t:
        for i in range(6):
            out_states[next_target, i] = y[i]
        if with_stm and have_stms:
            for i in range(36):
                stms_view[next_target, i] = y[6 + i]
        next_target += 1
    if next_target >= n_targets:
        return STATUS_OK, next_target, 0, 0, 0.0

    direction = 1.0 if targets[n_targets - 1] > t else -1.0
    h = direction * (10.0 if max_step > 10.0 else max_step)

    cdef double* py = y
    cdef double* pynew = ynew
    cdef double* pk1 = k1
    cdef double* pk7 = k7

    _rhs(t, py, params, with_stm, pk1)
    n_rhs += 1

    while next_target < n_targets:
        remaining = targets[next_target] - t
        if fabs(h) >= fabs(remaining):
            h = remaining

        for i in range(dim):
            ytmp[i] = py[i] + h * _A21 * pk1[i]
        _rhs(t + 0.2 * h, ytmp, params, with_stm, k2)
        for i in range(dim):
            ytmp[i] = py[i] + h * (_A31 * pk1[i] + _A32 * k2[i])
        _rhs(t + 0.3 * h, ytmp, params, with_stm, k3)
        for i in range(dim):
            ytmp[i] = py[i] + h * (_A41 * pk1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(t + 0.8 * h, ytmp, params, with_stm, k4)
        for i in range(dim):
            ytmp[i] = py[i] + h * (_A51 * pk1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(t + 8.0 / 9.0 * h, ytmp, params, with_stm, k5)
        for i in range(dim):
            ytmp[i] = py[i] + h * (
                _A61 * pk1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        _rhs(t + h, ytmp, params, with_stm, k6)
        for i in range(dim):
            pynew[i] = py[i] + h * (
                _B1 * pk1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
            )
        _rhs(t + h, pynew, params, with_stm, pk7)
        n_rhs += 6

        err_sq = 0.0
        err_pos = 0.0
        err_vel = 0.0
        for i in range(6):
            e = h * (
                _E1 * pk1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * pk7[i]
            )
            atol = atol_pos if i < 3 else atol_vel
            ay0 = fabs(py[i])
            ay1 = fabs(pynew[i])
            sc = atol + rtol * (ay0 if ay0 > ay1 else ay1)
            err_sq += (e / sc) * (e / sc)
            if i < 3:
                err_pos += e * e
            else:
                err_vel += e * e
        err = sqrt(err_sq / 6.0)

        if err <= 1.0:
            n_steps += 1
            err_accum += sqrt(err_pos) + sqrt(err_vel) * fabs(
                targets[n_targets - 1] - t - h
            )
            t_new = t + h
            target = targets[next_target]
            if fabs(t_new - target) <= 4.0 * 2.220446049250313e-16 * (1.0 if fabs(target) < 1.0 else fabs(target)):
                t_new = target
            t = t_new
            swp = py
            py = pynew
            pynew = swp
            swp = pk1
            pk1 = pk7
            pk7 = swp

            r_now = sqrt(py[0] * py[0] + py[1] * py[1] + py[2] * py[2])
            if r_now - re < decay_alt:
                return STATUS_DECAY, next_target, n_steps, n_rhs, err_accum

            if t == target:
                for i in range(6):
                    out_states[next_target, i] = py[i]
                if with_stm and have_stms:
                    for i in range(36):
                        stms_view[next_target, i] = py[6 + i]
                next_target += 1

            fac = 0.9 * pow(err, -0.2) if err > 0.0 else 5.0
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
            h *= fac
            if fabs(h) > max_step:
                h = direction * max_step
        else:
            fac = 0.9 * pow(err, -0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 1.0:
                fac = 1.0
            h *= fac
            if fabs(h) < min_step:
                return STATUS_UNDERFLOW, next_target, n_steps, n_rhs, err_accum

    return STATUS_OK, next_target, n_steps, n_rhs, err_accum
