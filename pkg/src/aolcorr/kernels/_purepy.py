"""Pure-Python propagation kernel.

Reference implementation of the hot loop: force evaluation and the adaptive
Dormand-Prince 5(4) integrator, optionally carrying the 6x6 state transition
matrix through the variational equations. ``_native`` (Cython) mirrors this
module statement-for-statement; keep the two in sync.

The kernel is deliberately free of package imports: everything it needs
arrives in the flat ``params`` vector built by ``kernels.pack_params``.
"""

import math

# --- params vector layout (shared with the native kernel) ---
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
IDX_TABLE = 20  # (h0, rho0, scale_height) triples follow

# status codes returned by integrate()
STATUS_OK = 0
STATUS_DECAY = 1
STATUS_UNDERFLOW = 2

# finite-difference steps for the variational-equation Jacobian
FD_DR = 1e-4  # km
FD_DV = 1e-4  # km/s

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


def atmosphere_density(alt_km, params):
    """Piecewise-exponential density, kg/m^3, including the bias scale and
    the F10.7 response factor."""
    n_bands = int(params[IDX_N_BANDS])
    if alt_km < 0.0:
        alt_km = 0.0
    # highest band whose base altitude is <= alt
    lo, hi = 0, n_bands - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if params[IDX_TABLE + 3 * mid] <= alt_km:
            lo = mid
        else:
            hi = mid - 1
    base = IDX_TABLE + 3 * lo
    rho = params[base + 1] * math.exp(-(alt_km - params[base]) / params[base + 2])
    f10_fac = 1.0 + params[IDX_KAPPA] * (params[IDX_F10] - params[IDX_F10_REF]) / params[IDX_F10_REF]
    if f10_fac < 0.0:
        f10_fac = 0.0
    return rho * params[IDX_RHO_SCALE] * f10_fac


def _accel_static(t, x, y, z, params):
    """Velocity-independent acceleration: two-body + zonal gravity + SRP."""
    mu = params[IDX_MU]
    re = params[IDX_RE]
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    r3 = r2 * r
    c = -mu / r3
    ax = c * x
    ay = c * y
    az = c * z

    j2 = params[IDX_J2]
    if j2 != 0.0:
        r5 = r2 * r3
        zr2 = z * z / r2
        k2 = 1.5 * j2 * mu * re * re / r5
        ax += -k2 * x * (1.0 - 5.0 * zr2)
        ay += -k2 * y * (1.0 - 5.0 * zr2)
        az += -k2 * z * (3.0 - 5.0 * zr2)
    j3 = params[IDX_J3]
    if j3 != 0.0:
        r7 = r2 * r2 * r2 * r
        q3 = mu * j3 * re * re * re / (2.0 * r7)
        z2r2 = z * z / r2
        ax += -q3 * x * (15.0 * z - 35.0 * z * z2r2)
        ay += -q3 * y * (15.0 * z - 35.0 * z * z2r2)
        az += -q3 * (30.0 * z * z - 35.0 * z * z * z2r2 - 3.0 * r2)
    j4 = params[IDX_J4]
    if j4 != 0.0:
        r7 = r2 * r2 * r2 * r
        zr2 = z * z / r2
        zr4 = zr2 * zr2
        q4 = 15.0 * mu * j4 * re * re * re * re / (8.0 * r7)
        ax += q4 * x * (1.0 - 14.0 * zr2 + 21.0 * zr4)
        ay += q4 * y * (1.0 - 14.0 * zr2 + 21.0 * zr4)
        az += q4 * z * (5.0 - 70.0 / 3.0 * zr2 + 21.0 * zr4)

    if params[IDX_SRP] != 0.0:
        lon = params[IDX_SUN_LON0] + params[IDX_SUN_RATE] * t
        eps = params[IDX_SUN_OBLIQUITY]
        sx = math.cos(lon)
        sy = math.sin(lon) * math.cos(eps)
        sz = math.sin(lon) * math.sin(eps)
        k = params[IDX_SRP_ACCEL] * params[IDX_SRP_COEFF]
        ax -= k * sx
        ay -= k * sy
        az -= k * sz
    return ax, ay, az


def _accel_drag(x, y, z, vx, vy, vz, params):
    """Cannonball drag against the co-rotating atmosphere.

    a = -1/2 rho Bc |v_rel| v_rel with rho in kg/m^3, Bc in m^2/kg, and
    velocities in km/s; the factor 500 carries the unit conversion to km/s^2.
    """
    r = math.sqrt(x * x + y * y + z * z)
    rho = atmosphere_density(r - params[IDX_RE], params)
    if rho == 0.0:
        return 0.0, 0.0, 0.0
    w = params[IDX_OMEGA]
    ux = vx + w * y
    uy = vy - w * x
    uz = vz
    un = math.sqrt(ux * ux + uy * uy + uz * uz)
    k = -500.0 * rho * params[IDX_BC] * un
    return k * ux, k * uy, k * uz


def accel_eci(t, y, params):
    """Total acceleration (km/s^2) at time t for state y = [r; v]."""
    x, yy, z, vx, vy, vz = y[0], y[1], y[2], y[3], y[4], y[5]
    ax, ay, az = _accel_static(t, x, yy, z, params)
    if params[IDX_DRAG] != 0.0:
        dx, dy, dz = _accel_drag(x, yy, z, vx, vy, vz, params)
        ax += dx
        ay += dy
        az += dz
    return ax, ay, az


def _rhs(t, y, params, with_stm, dy):
    """Derivative of the (possibly STM-augmented) state, written into dy."""
    x, yy, z = y[0], y[1], y[2]
    vx, vy, vz = y[3], y[4], y[5]
    drag_on = params[IDX_DRAG] != 0.0

    ax, ay, az = _accel_static(t, x, yy, z, params)
    if drag_on:
        dxx, dyy, dzz = _accel_drag(x, yy, z, vx, vy, vz, params)
        ax += dxx
        ay += dyy
        az += dzz
    dy[0] = vx
    dy[1] = vy
    dy[2] = vz
    dy[3] = ax
    dy[4] = ay
    dy[5] = az
    if not with_stm:
        return

    # G = d(accel)/dr by central differences of the full acceleration;
    # D = d(accel)/dv from the drag term alone (gravity and SRP are
    # velocity-independent).
    g = [[0.0] * 3 for _ in range(3)]
    d = [[0.0] * 3 for _ in range(3)]
    pos = [x, yy, z]
    for axis in range(3):
        p_hi = list(pos)
        p_lo = list(pos)
        p_hi[axis] += FD_DR
        p_lo[axis] -= FD_DR
        ahx, ahy, ahz = _accel_static(t, p_hi[0], p_hi[1], p_hi[2], params)
        alx, aly, alz = _accel_static(t, p_lo[0], p_lo[1], p_lo[2], params)
        if drag_on:
            hx, hy, hz = _accel_drag(p_hi[0], p_hi[1], p_hi[2], vx, vy, vz, params)
            lx, ly, lz = _accel_drag(p_lo[0], p_lo[1], p_lo[2], vx, vy, vz, params)
            ahx += hx
            ahy += hy
            ahz += hz
            alx += lx
            aly += ly
            alz += lz
        inv = 0.5 / FD_DR
        g[0][axis] = (ahx - alx) * inv
        g[1][axis] = (ahy - aly) * inv
        g[2][axis] = (ahz - alz) * inv
    if drag_on:
        vel = [vx, vy, vz]
        for axis in range(3):
            v_hi = list(vel)
            v_lo = list(vel)
            v_hi[axis] += FD_DV
            v_lo[axis] -= FD_DV
            hx, hy, hz = _accel_drag(x, yy, z, v_hi[0], v_hi[1], v_hi[2], params)
            lx, ly, lz = _accel_drag(x, yy, z, v_lo[0], v_lo[1], v_lo[2], params)
            inv = 0.5 / FD_DV
            d[0][axis] = (hx - lx) * inv
            d[1][axis] = (hy - ly) * inv
            d[2][axis] = (hz - lz) * inv

    # Phi rows 0-2 derive from rows 3-5; rows 3-5 from G*Phi_r + D*Phi_v.
    for i in range(3):
        for j in range(6):
            dy[6 + 6 * i + j] = y[6 + 6 * (i + 3) + j]
    for i in range(3):
        gi, di = g[i], d[i]
        for j in range(6):
            acc = 0.0
            for k in range(3):
                acc += gi[k] * y[6 + 6 * k + j] + di[k] * y[6 + 6 * (k + 3) + j]
            dy[6 + 6 * (i + 3) + j] = acc


def integrate(
    t0,
    y0,
    targets,
    params,
    rtol,
    atol_pos,
    atol_vel,
    min_step,
    max_step,
    with_stm,
    out_states,
    out_stms,
):
    """Adaptive DP5(4) integration from t0 through each epoch in ``targets``.

    Targets must be strictly monotone and all lie on one side of t0 (the
    first may equal t0). States (and row-major STMs when ``with_stm``) are
    written into the provided output buffers at each target. Steps are
    clamped so every target is hit exactly; no interpolation.

    Returns (status, n_done, n_steps, n_rhs, err_accum). err_accum is a
    first-order estimate of the accumulated position error at the final
    target: each accepted step contributes its local position-error estimate
    plus its local velocity-error estimate transported over the remaining
    flight time (km).
    """
    n_targets = len(targets)
    dim = 42 if with_stm else 6
    y = [0.0] * dim
    for i in range(6):
        y[i] = float(y0[i])
    if with_stm:
        for i in range(6):
            y[6 + 6 * i + i] = 1.0

    t = float(t0)
    next_target = 0
    n_steps = 0
    n_rhs = 0
    err_accum = 0.0

    def emit(idx):
        for i in range(6):
            out_states[idx, i] = y[i]
        if with_stm:
            for i in range(36):
                out_stms[idx, i] = y[6 + i]

    # leading targets at t0 (at most one; targets are strictly monotone)
    while next_target < n_targets and targets[next_target] == t:
        emit(next_target)
        next_target += 1
    if next_target >= n_targets:
        return STATUS_OK, next_target, 0, 0, 0.0

    direction = 1.0 if targets[n_targets - 1] > t else -1.0
    h = direction * min(10.0, max_step)

    k1 = [0.0] * dim
    k2 = [0.0] * dim
    k3 = [0.0] * dim
    k4 = [0.0] * dim
    k5 = [0.0] * dim
    k6 = [0.0] * dim
    k7 = [0.0] * dim
    ytmp = [0.0] * dim
    ynew = [0.0] * dim

    _rhs(t, y, params, with_stm, k1)
    n_rhs += 1

    decay_alt = params[IDX_DECAY_ALT]
    re = params[IDX_RE]

    while next_target < n_targets:
        # clamp onto the next target
        remaining = targets[next_target] - t
        if abs(h) >= abs(remaining):
            h = remaining

        for i in range(dim):
            ytmp[i] = y[i] + h * _A21 * k1[i]
        _rhs(t + 0.2 * h, ytmp, params, with_stm, k2)
        for i in range(dim):
            ytmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(t + 0.3 * h, ytmp, params, with_stm, k3)
        for i in range(dim):
            ytmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(t + 0.8 * h, ytmp, params, with_stm, k4)
        for i in range(dim):
            ytmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(t + 8.0 / 9.0 * h, ytmp, params, with_stm, k5)
        for i in range(dim):
            ytmp[i] = y[i] + h * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        _rhs(t + h, ytmp, params, with_stm, k6)
        for i in range(dim):
            ynew[i] = y[i] + h * (
                _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
            )
        _rhs(t + h, ynew, params, with_stm, k7)
        n_rhs += 6

        # error estimate on the six state components
        err_sq = 0.0
        err_pos = 0.0
        err_vel = 0.0
        for i in range(6):
            e = h * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            atol = atol_pos if i < 3 else atol_vel
            ay0 = abs(y[i])
            ay1 = abs(ynew[i])
            sc = atol + rtol * (ay0 if ay0 > ay1 else ay1)
            err_sq += (e / sc) * (e / sc)
            if i < 3:
                err_pos += e * e
            else:
                err_vel += e * e
        err = math.sqrt(err_sq / 6.0)

        if err <= 1.0:
            n_steps += 1
            err_accum += math.sqrt(err_pos) + math.sqrt(err_vel) * abs(
                targets[n_targets - 1] - t - h
            )
            t_new = t + h
            target = targets[next_target]
            # clamped steps land within a few ulps of the target epoch
            if abs(t_new - target) <= 4.0 * 2.220446049250313e-16 * max(1.0, abs(target)):
                t_new = target
            t = t_new
            y, ynew = ynew, y
            k1, k7 = k7, k1

            r_now = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
            if r_now - re < decay_alt:
                return STATUS_DECAY, next_target, n_steps, n_rhs, err_accum

            if t == target:
                emit(next_target)
                next_target += 1

            fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
            h *= fac
            if abs(h) > max_step:
                h = direction * max_step
        else:
            fac = 0.9 * err ** -0.2
            if fac < 0.2:
                fac = 0.2
            elif fac > 1.0:
                fac = 1.0
            h *= fac
            if abs(h) < min_step:
                return STATUS_UNDERFLOW, next_target, n_steps, n_rhs, err_accum

    return STATUS_OK, next_target, n_steps, n_rhs, err_accum
