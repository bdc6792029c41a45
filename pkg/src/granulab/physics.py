"""Deterministic rigid-sphere deposition onto a walled table.

Bodies are translation-only spheres (no angular state). One fixed
timestep runs: gravity, contact detection, sequential impulse iterations
over the contacts in a fixed order, symplectic-Euler position update,
then a positional projection pass that keeps penetrations below the
configured tolerance. Bodies whose speed stays under the sleep threshold
for `sleep_frames` consecutive steps are put to sleep (velocity zeroed,
treated as static); they wake when hit hard enough or when their support
disappears. A scene has converged when every body is asleep.

Determinism contract: identical inputs give bit-identical results. The
hot loop is a single-threaded numba kernel; contact order is a pure
function of body indices and positions, with no address- or time-based
ordering anywhere.

Internal units are mm, s, and unit-density spheres (mass proportional to
radius cubed); `SimConfig.gravity` is given in m/s^2 and converted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, InvalidSpec
from .sampling import SceneSpec

# speculative-contact and solver tuning shared by kernel and wrapper
_POSITION_ITERS = 4
_POSITION_BETA = 0.8
_SLOP_FRACTION = 0.3          # resting penetration target, as fraction of tolerance
_SUPPORT_EPS_FRACTION = 0.05  # support gap allowance, as fraction of body radius
_WAKE_SPEED_FACTOR = 4.0      # wake when an impulse would add this multiple of sleep_v
_PAIRS_PER_BODY = 64


@dataclass(frozen=True)
class SimConfig:
    """Contact-solver parameters; defaults are tuned for mm-scale granules."""

    timestep: float = 1.0 / 240.0
    gravity: float = 9.81                  # m/s^2, along -z
    restitution: float = 0.1
    friction: float = 0.5
    solver_iterations: int = 16
    penetration_tolerance: float | None = None  # mm; None -> 0.02 * min radius
    sleep_linear_velocity: float = 1.0     # mm/s
    sleep_frames: int = 30
    max_steps: int = 20000

    def __post_init__(self):
        if self.timestep <= 0:
            raise ConfigError(f"timestep must be > 0, got {self.timestep}")
        if not 0.0 <= self.restitution <= 1.0:
            raise ConfigError(f"restitution must be in [0, 1], got {self.restitution}")
        for name in ("solver_iterations", "sleep_frames", "max_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.penetration_tolerance is not None and self.penetration_tolerance <= 0:
            raise ConfigError("penetration_tolerance must be > 0 when given")


@dataclass(frozen=True)
class BodyState:
    center: tuple[float, float, float]
    velocity: tuple[float, float, float]
    radius: float
    asleep: bool


@dataclass
class SimResult:
    bodies: list[BodyState]
    steps_taken: int
    converged: bool


@njit(cache=True)
def _run_sim(pos, vel, radius, inv_mass, asleep, sleep_count,
             half_table, dt, g, restitution, rest_thresh,
             mu_floor, mu_pair, iterations, tol, slop,
             sleep_v, sleep_frames, max_steps, stop_when_asleep,
             pair_i, pair_j, ke_trace, pen_trace):
    """Advance the world up to max_steps; returns (steps, all_asleep, status).

    status 0 = ok, 1 = pair buffer overflow (scene denser than supported).
    """
    n = pos.shape[0]
    max_pairs = pair_i.shape[0]
    beta = _POSITION_BETA
    wake_v = _WAKE_SPEED_FACTOR * sleep_v

    r_max = 0.0
    for i in range(n):
        if radius[i] > r_max:
            r_max = radius[i]

    speed = np.empty(n, dtype=np.float64)
    supported = np.empty(n, dtype=np.uint8)
    wake_acc = np.empty(n, dtype=np.float64)

    # per-pair contact state, reused across steps
    p_nx = np.empty(max_pairs, dtype=np.float64)
    p_ny = np.empty(max_pairs, dtype=np.float64)
    p_nz = np.empty(max_pairs, dtype=np.float64)
    p_target = np.empty(max_pairs, dtype=np.float64)
    p_lam = np.empty(max_pairs, dtype=np.float64)
    p_ltx = np.empty(max_pairs, dtype=np.float64)
    p_lty = np.empty(max_pairs, dtype=np.float64)
    p_ltz = np.empty(max_pairs, dtype=np.float64)

    # floor / wall contact state (walls: 0:+x 1:-x 2:+y 3:-y, frictionless)
    f_act = np.empty(n, dtype=np.uint8)
    f_target = np.empty(n, dtype=np.float64)
    f_lam = np.empty(n, dtype=np.float64)
    f_ltx = np.empty(n, dtype=np.float64)
    f_lty = np.empty(n, dtype=np.float64)
    w_act = np.empty((n, 4), dtype=np.uint8)
    w_target = np.empty((n, 4), dtype=np.float64)
    w_lam = np.empty((n, 4), dtype=np.float64)

    steps_done = 0
    all_asleep = False
    status = 0

    for step in range(max_steps):
        steps_done = step + 1

        # -- gravity on awake bodies, current speeds
        v_max = 0.0
        for i in range(n):
            if asleep[i] == 0:
                vel[i, 2] -= g * dt
            sp = math.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2)
            speed[i] = sp
            if sp > v_max:
                v_max = sp
            supported[i] = 0
            wake_acc[i] = 0.0

        # -- broad phase: uniform grid; cell covers the largest possible
        #    speculative reach so a +-1 cell scan finds every candidate
        cell = 2.0 * r_max + 2.0 * v_max * dt + tol
        if cell < 1e-6:
            cell = 1e-6
        inv_cell = 1.0 / cell

        z_max = 0.0
        for i in range(n):
            if pos[i, 2] > z_max:
                z_max = pos[i, 2]
        nxc = int(2.0 * half_table * inv_cell) + 5
        nzc = int(z_max * inv_cell) + 5
        ncell = nxc * nxc * nzc

        cell_of = np.empty(n, dtype=np.int64)
        counts = np.zeros(ncell + 1, dtype=np.int64)
        for i in range(n):
            ix = int((pos[i, 0] + half_table) * inv_cell) + 2
            iy = int((pos[i, 1] + half_table) * inv_cell) + 2
            iz = int(pos[i, 2] * inv_cell) + 2
            if ix < 0:
                ix = 0
            if ix > nxc - 1:
                ix = nxc - 1
            if iy < 0:
                iy = 0
            if iy > nxc - 1:
                iy = nxc - 1
            if iz < 0:
                iz = 0
            if iz > nzc - 1:
                iz = nzc - 1
            c = (iz * nxc + iy) * nxc + ix
            cell_of[i] = c
            counts[c + 1] += 1
        for c in range(ncell):
            counts[c + 1] += counts[c]
        order = np.empty(n, dtype=np.int64)
        fill = counts.copy()
        for i in range(n):
            c = cell_of[i]
            order[fill[c]] = i
            fill[c] += 1

        # -- narrow phase: collect candidate pairs (i < j), fixed order
        m = 0
        overflow = False
        for i in range(n):
            ci = cell_of[i]
            base_iz = ci // (nxc * nxc)
            rem = ci - base_iz * nxc * nxc
            base_iy = rem // nxc
            base_ix = rem - base_iy * nxc
            for dz in range(-1, 2):
                iz = base_iz + dz
                if iz < 0 or iz >= nzc:
                    continue
                for dy in range(-1, 2):
                    iy = base_iy + dy
                    if iy < 0 or iy >= nxc:
                        continue
                    for dx in range(-1, 2):
                        ix = base_ix + dx
                        if ix < 0 or ix >= nxc:
                            continue
                        c = (iz * nxc + iy) * nxc + ix
                        for s in range(counts[c], counts[c + 1]):
                            j = order[s]
                            if j <= i:
                                continue
                            ddx = pos[j, 0] - pos[i, 0]
                            ddy = pos[j, 1] - pos[i, 1]
                            ddz = pos[j, 2] - pos[i, 2]
                            rvx = vel[j, 0] - vel[i, 0]
                            rvy = vel[j, 1] - vel[i, 1]
                            rvz = vel[j, 2] - vel[i, 2]
                            rel = math.sqrt(rvx * rvx + rvy * rvy + rvz * rvz)
                            reach = radius[i] + radius[j] + rel * dt + tol
                            if ddx * ddx + ddy * ddy + ddz * ddz < reach * reach:
                                if m >= max_pairs:
                                    overflow = True
                                else:
                                    pair_i[m] = i
                                    pair_j[m] = j
                                    m += 1
        if overflow:
            status = 1
            break

        # -- precompute pair contact frames, velocity targets, support marks
        for k in range(m):
            i = pair_i[k]
            j = pair_j[k]
            ddx = pos[j, 0] - pos[i, 0]
            ddy = pos[j, 1] - pos[i, 1]
            ddz = pos[j, 2] - pos[i, 2]
            d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
            if d > 1e-12:
                nx = ddx / d
                ny = ddy / d
                nz = ddz / d
            else:
                nx = 0.0
                ny = 0.0
                nz = 1.0
            gap = d - radius[i] - radius[j]
            vn = ((vel[j, 0] - vel[i, 0]) * nx
                  + (vel[j, 1] - vel[i, 1]) * ny
                  + (vel[j, 2] - vel[i, 2]) * nz)
            if gap <= 0.0:
                approach = -vn
                target = restitution * approach if approach > rest_thresh else 0.0
            else:
                target = -gap / dt
            p_nx[k] = nx
            p_ny[k] = ny
            p_nz[k] = nz
            p_target[k] = target
            p_lam[k] = 0.0
            p_ltx[k] = 0.0
            p_lty[k] = 0.0
            p_ltz[k] = 0.0
            if gap < _SUPPORT_EPS_FRACTION * radius[i]:
                supported[i] = 1
            if gap < _SUPPORT_EPS_FRACTION * radius[j]:
                supported[j] = 1

        # -- floor and wall contact activation
        for i in range(n):
            marg = speed[i] * dt + tol
            gap = pos[i, 2] - radius[i]
            if gap < marg:
                f_act[i] = 1
                vn = vel[i, 2]
                if gap <= 0.0:
                    approach = -vn
                    f_target[i] = restitution * approach if approach > rest_thresh else 0.0
                else:
                    f_target[i] = -gap / dt
            else:
                f_act[i] = 0
            f_lam[i] = 0.0
            f_ltx[i] = 0.0
            f_lty[i] = 0.0
            if gap < _SUPPORT_EPS_FRACTION * radius[i]:
                supported[i] = 1

            lim = half_table - radius[i]
            # walls: gap, approach sign per wall (normals -x, +x, -y, +y inward)
            for w in range(4):
                axis = w // 2
                sign = 1.0 if (w % 2) == 0 else -1.0  # +x wall first, then -x
                gw = lim - sign * pos[i, axis]
                if gw < marg:
                    w_act[i, w] = 1
                    vn = -sign * vel[i, axis]
                    if gw <= 0.0:
                        approach = -vn
                        w_target[i, w] = restitution * approach if approach > rest_thresh else 0.0
                    else:
                        w_target[i, w] = -gw / dt
                else:
                    w_act[i, w] = 0
                w_lam[i, w] = 0.0

        # -- sequential impulse iterations (floor, walls, pairs; index order)
        for it in range(iterations):
            for i in range(n):
                if asleep[i] == 1:
                    continue
                im = inv_mass[i]
                if f_act[i] == 1:
                    vn = vel[i, 2]
                    dl = (f_target[i] - vn) / im
                    new_l = f_lam[i] + dl
                    if new_l < 0.0:
                        new_l = 0.0
                    dl = new_l - f_lam[i]
                    f_lam[i] = new_l
                    vel[i, 2] += dl * im
                    # Coulomb friction on the floor plane
                    vtx = vel[i, 0]
                    vty = vel[i, 1]
                    vt = math.sqrt(vtx * vtx + vty * vty)
                    if vt > 1e-12:
                        cx = f_ltx[i] - vtx / im
                        cy = f_lty[i] - vty / im
                        cap = mu_floor * f_lam[i]
                        cn = math.sqrt(cx * cx + cy * cy)
                        if cn > cap:
                            scale = cap / cn
                            cx *= scale
                            cy *= scale
                        dtx = cx - f_ltx[i]
                        dty = cy - f_lty[i]
                        f_ltx[i] = cx
                        f_lty[i] = cy
                        vel[i, 0] += dtx * im
                        vel[i, 1] += dty * im
                for w in range(4):
                    if w_act[i, w] == 1:
                        axis = w // 2
                        sign = 1.0 if (w % 2) == 0 else -1.0
                        vn = -sign * vel[i, axis]
                        dl = (w_target[i, w] - vn) / im
                        new_l = w_lam[i, w] + dl
                        if new_l < 0.0:
                            new_l = 0.0
                        dl = new_l - w_lam[i, w]
                        w_lam[i, w] = new_l
                        vel[i, axis] += -sign * dl * im

            for k in range(m):
                i = pair_i[k]
                j = pair_j[k]
                wi = 0.0 if asleep[i] == 1 else inv_mass[i]
                wj = 0.0 if asleep[j] == 1 else inv_mass[j]
                ks = wi + wj
                if ks == 0.0:
                    continue
                nx = p_nx[k]
                ny = p_ny[k]
                nz = p_nz[k]
                rvx = vel[j, 0] - vel[i, 0]
                rvy = vel[j, 1] - vel[i, 1]
                rvz = vel[j, 2] - vel[i, 2]
                vn = rvx * nx + rvy * ny + rvz * nz
                dl = (p_target[k] - vn) / ks
                new_l = p_lam[k] + dl
                if new_l < 0.0:
                    new_l = 0.0
                dl = new_l - p_lam[k]
                p_lam[k] = new_l
                vel[i, 0] -= dl * wi * nx
                vel[i, 1] -= dl * wi * ny
                vel[i, 2] -= dl * wi * nz
                vel[j, 0] += dl * wj * nx
                vel[j, 1] += dl * wj * ny
                vel[j, 2] += dl * wj * nz
                if asleep[i] == 1:
                    wake_acc[i] += abs(dl)
                if asleep[j] == 1:
                    wake_acc[j] += abs(dl)
                # friction in the contact plane
                rvx = vel[j, 0] - vel[i, 0]
                rvy = vel[j, 1] - vel[i, 1]
                rvz = vel[j, 2] - vel[i, 2]
                vn = rvx * nx + rvy * ny + rvz * nz
                tx = rvx - vn * nx
                ty = rvy - vn * ny
                tz = rvz - vn * nz
                vt = math.sqrt(tx * tx + ty * ty + tz * tz)
                if vt > 1e-12:
                    cx = p_ltx[k] - tx / ks
                    cy = p_lty[k] - ty / ks
                    cz = p_ltz[k] - tz / ks
                    cap = mu_pair * p_lam[k]
                    cn = math.sqrt(cx * cx + cy * cy + cz * cz)
                    if cn > cap:
                        scale = cap / cn
                        cx *= scale
                        cy *= scale
                        cz *= scale
                    dtx = cx - p_ltx[k]
                    dty = cy - p_lty[k]
                    dtz = cz - p_ltz[k]
                    p_ltx[k] = cx
                    p_lty[k] = cy
                    p_ltz[k] = cz
                    vel[i, 0] -= dtx * wi
                    vel[i, 1] -= dty * wi
                    vel[i, 2] -= dtz * wi
                    vel[j, 0] += dtx * wj
                    vel[j, 1] += dty * wj
                    vel[j, 2] += dtz * wj

        # -- integrate awake bodies
        for i in range(n):
            if asleep[i] == 0:
                pos[i, 0] += vel[i, 0] * dt
                pos[i, 1] += vel[i, 1] * dt
                pos[i, 2] += vel[i, 2] * dt

        # -- positional projection toward penetration <= slop
        for pit in range(_POSITION_ITERS):
            for i in range(n):
                if asleep[i] == 1:
                    continue
                pen = radius[i] - pos[i, 2]
                if pen > slop:
                    pos[i, 2] += beta * (pen - slop)
                lim = half_table - radius[i]
                if pos[i, 0] > lim + slop:
                    pos[i, 0] -= beta * (pos[i, 0] - lim - slop)
                elif pos[i, 0] < -lim - slop:
                    pos[i, 0] += beta * (-lim - slop - pos[i, 0])
                if pos[i, 1] > lim + slop:
                    pos[i, 1] -= beta * (pos[i, 1] - lim - slop)
                elif pos[i, 1] < -lim - slop:
                    pos[i, 1] += beta * (-lim - slop - pos[i, 1])
            for k in range(m):
                i = pair_i[k]
                j = pair_j[k]
                wi = 0.0 if asleep[i] == 1 else inv_mass[i]
                wj = 0.0 if asleep[j] == 1 else inv_mass[j]
                ks = wi + wj
                if ks == 0.0:
                    continue
                ddx = pos[j, 0] - pos[i, 0]
                ddy = pos[j, 1] - pos[i, 1]
                ddz = pos[j, 2] - pos[i, 2]
                d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                pen = radius[i] + radius[j] - d
                if pen > slop:
                    if d > 1e-12:
                        nx = ddx / d
                        ny = ddy / d
                        nz = ddz / d
                    else:
                        nx = 0.0
                        ny = 0.0
                        nz = 1.0
                    corr = beta * (pen - slop)
                    pos[i, 0] -= corr * (wi / ks) * nx
                    pos[i, 1] -= corr * (wi / ks) * ny
                    pos[i, 2] -= corr * (wi / ks) * nz
                    pos[j, 0] += corr * (wj / ks) * nx
                    pos[j, 1] += corr * (wj / ks) * ny
                    pos[j, 2] += corr * (wj / ks) * nz

        # -- wake / sleep bookkeeping
        all_asleep = True
        for i in range(n):
            if asleep[i] == 1:
                if wake_acc[i] * inv_mass[i] > wake_v or supported[i] == 0:
                    asleep[i] = 0
                    sleep_count[i] = 0
            if asleep[i] == 0:
                sp2 = vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
                if sp2 < sleep_v * sleep_v:
                    sleep_count[i] += 1
                    if sleep_count[i] >= sleep_frames:
                        asleep[i] = 1
                        vel[i, 0] = 0.0
                        vel[i, 1] = 0.0
                        vel[i, 2] = 0.0
                else:
                    sleep_count[i] = 0
            if asleep[i] == 0:
                all_asleep = False

        # -- diagnostics: state at the end of the step
        ke = 0.0
        for i in range(n):
            ke += 0.5 * radius[i] ** 3 * (vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2)
        max_pen = 0.0
        for i in range(n):
            pen = radius[i] - pos[i, 2]
            if pen > max_pen:
                max_pen = pen
            over = abs(pos[i, 0]) - (half_table - radius[i])
            if over > max_pen:
                max_pen = over
            over = abs(pos[i, 1]) - (half_table - radius[i])
            if over > max_pen:
                max_pen = over
        for k in range(m):
            i = pair_i[k]
            j = pair_j[k]
            ddx = pos[j, 0] - pos[i, 0]
            ddy = pos[j, 1] - pos[i, 1]
            ddz = pos[j, 2] - pos[i, 2]
            d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
            pen = radius[i] + radius[j] - d
            if pen > max_pen:
                max_pen = pen
        ke_trace[step] = ke
        pen_trace[step] = max_pen

        if stop_when_asleep and all_asleep:
            break

    return steps_done, all_asleep, status


@njit(cache=True)
def _polish_positions(pos, radius, inv_mass, half_table, slop, tol, rounds):
    """Extra projection rounds on the settled pile; returns final max penetration."""
    n = pos.shape[0]
    beta = _POSITION_BETA
    max_pen = 0.0
    for r in range(rounds):
        max_pen = 0.0
        for i in range(n):
            pen = radius[i] - pos[i, 2]
            if pen > max_pen:
                max_pen = pen
            over = abs(pos[i, 0]) - (half_table - radius[i])
            if over > max_pen:
                max_pen = over
            over = abs(pos[i, 1]) - (half_table - radius[i])
            if over > max_pen:
                max_pen = over
            for j in range(i + 1, n):
                ddx = pos[j, 0] - pos[i, 0]
                ddy = pos[j, 1] - pos[i, 1]
                ddz = pos[j, 2] - pos[i, 2]
                d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                pen = radius[i] + radius[j] - d
                if pen > max_pen:
                    max_pen = pen
        if max_pen <= 0.95 * tol:
            break
        for i in range(n):
            pen = radius[i] - pos[i, 2]
            if pen > slop:
                pos[i, 2] += beta * (pen - slop)
            lim = half_table - radius[i]
            if pos[i, 0] > lim + slop:
                pos[i, 0] -= beta * (pos[i, 0] - lim - slop)
            elif pos[i, 0] < -lim - slop:
                pos[i, 0] += beta * (-lim - slop - pos[i, 0])
            if pos[i, 1] > lim + slop:
                pos[i, 1] -= beta * (pos[i, 1] - lim - slop)
            elif pos[i, 1] < -lim - slop:
                pos[i, 1] += beta * (-lim - slop - pos[i, 1])
            for j in range(i + 1, n):
                ddx = pos[j, 0] - pos[i, 0]
                ddy = pos[j, 1] - pos[i, 1]
                ddz = pos[j, 2] - pos[i, 2]
                d = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                pen = radius[i] + radius[j] - d
                if pen > slop:
                    if d > 1e-12:
                        nx = ddx / d
                        ny = ddy / d
                        nz = ddz / d
                    else:
                        nx = 0.0
                        ny = 0.0
                        nz = 1.0
                    wi = inv_mass[i]
                    wj = inv_mass[j]
                    ks = wi + wj
                    corr = beta * (pen - slop)
                    pos[i, 0] -= corr * (wi / ks) * nx
                    pos[i, 1] -= corr * (wi / ks) * ny
                    pos[i, 2] -= corr * (wi / ks) * nz
                    pos[j, 0] += corr * (wj / ks) * nx
                    pos[j, 1] += corr * (wj / ks) * ny
                    pos[j, 2] += corr * (wj / ks) * nz
    return max_pen


class World:
    """Single-owner simulation state. Mutated in place by `step`/`run`."""

    def __init__(self, positions, velocities, radii, table_size: float, config: SimConfig):
        self.pos = np.ascontiguousarray(positions, dtype=np.float64).copy()
        self.vel = np.ascontiguousarray(velocities, dtype=np.float64).copy()
        self.radius = np.ascontiguousarray(radii, dtype=np.float64).copy()
        n = self.radius.shape[0]
        if self.pos.shape != (n, 3) or self.vel.shape != (n, 3):
            raise InvalidSpec("positions and velocities must be (n, 3) arrays")
        if n == 0:
            raise InvalidSpec("world needs at least one body")
        if np.any(self.radius <= 0):
            raise InvalidSpec("all radii must be > 0")
        self.table_size = float(table_size)
        self.config = config
        self.inv_mass = 1.0 / self.radius**3
        self.asleep = np.zeros(n, dtype=np.uint8)
        self.sleep_count = np.zeros(n, dtype=np.int64)
        self.tolerance = (
            config.penetration_tolerance
            if config.penetration_tolerance is not None
            else 0.02 * float(self.radius.min())
        )
        self._pair_i = np.empty(_PAIRS_PER_BODY * n + 1024, dtype=np.int64)
        self._pair_j = np.empty_like(self._pair_i)

    @property
    def n_bodies(self) -> int:
        return self.radius.shape[0]

    def kinetic_energy(self) -> float:
        return float(np.sum(0.5 * self.radius**3 * np.sum(self.vel**2, axis=1)))

    def run(self, max_steps: int, stop_when_asleep: bool = True):
        """Advance up to max_steps; returns (steps, all_asleep, ke_trace, pen_trace)."""
        cfg = self.config
        ke_trace = np.zeros(max_steps, dtype=np.float64)
        pen_trace = np.zeros(max_steps, dtype=np.float64)
        steps, all_asleep, status = _run_sim(
            self.pos, self.vel, self.radius, self.inv_mass,
            self.asleep, self.sleep_count,
            self.table_size / 2.0, cfg.timestep, cfg.gravity * 1000.0,
            cfg.restitution, 2.0 * cfg.gravity * 1000.0 * cfg.timestep,
            cfg.friction, cfg.friction, cfg.solver_iterations,
            self.tolerance, _SLOP_FRACTION * self.tolerance,
            cfg.sleep_linear_velocity, cfg.sleep_frames,
            max_steps, stop_when_asleep,
            self._pair_i, self._pair_j, ke_trace, pen_trace,
        )
        if status == 1:
            raise InvalidSpec("contact buffer overflow: scene too dense to simulate")
        return steps, bool(all_asleep), ke_trace[:steps], pen_trace[:steps]

    def step(self) -> None:
        """One fixed timestep."""
        self.run(1, stop_when_asleep=False)

    def body_states(self) -> list[BodyState]:
        return [
            BodyState(
                center=(float(self.pos[i, 0]), float(self.pos[i, 1]), float(self.pos[i, 2])),
                velocity=(float(self.vel[i, 0]), float(self.vel[i, 1]), float(self.vel[i, 2])),
                radius=float(self.radius[i]),
                asleep=bool(self.asleep[i]),
            )
            for i in range(self.n_bodies)
        ]


def world_from_spec(spec: SceneSpec, table_size: float, config: SimConfig) -> World:
    """Build the deposition world for a sampled scene (spheres at rest)."""
    radii = np.asarray(spec.sizes, dtype=np.float64) / 2.0
    if np.any(2.0 * radii > table_size / 4.0):
        raise InvalidSpec("particle diameters must not exceed table_size / 4")
    n = radii.shape[0]
    if spec.drop_positions.shape != (n, 3):
        raise InvalidSpec("drop_positions must be (count, 3)")
    half = table_size / 2.0
    if np.any(np.abs(spec.drop_positions[:, :2]) + radii[:, None] > half):
        raise InvalidSpec("initial positions must lie inside the walls")
    return World(spec.drop_positions, np.zeros((n, 3)), radii, table_size, config)


def settle(
    spec: SceneSpec,
    table_size: float,
    config: SimConfig = SimConfig(),
    trace_path=None,
    trace_every: int = 100,
) -> SimResult:
    """Drop the scene's spheres and integrate until every body sleeps.

    Returns converged=False (not an error) when max_steps runs out with
    bodies still awake; callers decide whether to retry with a new seed.
    When `trace_path` is given, a line per `trace_every` steps is written:
    `step max_penetration_mm total_kinetic_energy`.
    """
    world = world_from_spec(spec, table_size, config)
    steps, all_asleep, ke_trace, pen_trace = world.run(config.max_steps, stop_when_asleep=True)

    converged = all_asleep
    if converged:
        max_pen = _polish_positions(
            world.pos, world.radius, world.inv_mass, table_size / 2.0,
            _SLOP_FRACTION * world.tolerance, world.tolerance, 200,
        )
        if max_pen > world.tolerance:
            converged = False

    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("# step max_penetration_mm kinetic_energy\n")
            for s in range(0, steps, max(1, trace_every)):
                fh.write(f"{s} {float(pen_trace[s])!r} {float(ke_trace[s])!r}\n")

    return SimResult(bodies=world.body_states(), steps_taken=steps, converged=converged)
