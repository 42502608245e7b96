"""Desk-scale quadruped with series-elastic joints.

The plant is a 6-DoF rigid trunk carrying four planar legs. Each leg has
massless links ending in a point-mass foot; hip and knee links are driven by
their motors through torsional springs (``tau = k (theta - q)``). Motors are
velocity-limited position servos. Ground contact is a penalty spring-damper
with regularised Coulomb friction.

Generalised velocity is ``[v_trunk (world, 3), omega (body, 3), q_dot (8)]``;
the equations of motion are assembled from the foot partial velocities and
integrated with semi-implicit Euler at 1 kHz.

Body frame: x forward, y left, z up. Joints are ordered
``[FR hip, FR knee, FL hip, FL knee, HR hip, HR knee, HL hip, HL knee]``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .kinematics import LegGeometry, inverse_kinematics

N_JOINTS = 8
PHYSICS_DT = 1e-3

# flat state layout
POS, QUAT, VEL, OMEGA = slice(0, 3), slice(3, 7), slice(7, 10), slice(10, 13)
THETA, Q, QD, THETAD = slice(13, 21), slice(21, 29), slice(29, 37), slice(37, 45)
STATE_SIZE = 45

# flat parameter layout
_P_SIZE = 31


class SimulationDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class ContactModel:
    ground_stiffness: float = 5000.0
    ground_damping: float = 50.0
    friction_coefficient: float = 0.8

    def __post_init__(self):
        if min(self.ground_stiffness, self.ground_damping, self.friction_coefficient) <= 0:
            raise ValueError("contact parameters must be positive")


def _default_hips():
    return ((0.12, -0.06, 0.0), (0.12, 0.06, 0.0), (-0.12, -0.06, 0.0), (-0.12, 0.06, 0.0))


@dataclass(frozen=True)
class RobotModel:
    trunk_mass: float = 2.9
    trunk_inertia: tuple[float, float, float] = (0.01, 0.02, 0.02)
    foot_mass: float = 0.05
    hip_positions: tuple = field(default_factory=_default_hips)
    spring_stiffness: float = 2.75
    motor_vel_cap: float = 4.0
    servo_gain: float = 100.0
    geometry: LegGeometry = field(default_factory=LegGeometry)
    gravity: float = 9.81
    # small rotational inertia of the links about their joints; keeps the
    # mass matrix regular when a leg is fully stretched
    link_inertia: float = 2e-5
    joint_damping: float = 0.01
    # trunk collision box half extents; its corners touch the ground like feet
    trunk_half_extents: tuple[float, float, float] = (0.15, 0.07, 0.03)

    def __post_init__(self):
        if min(self.trunk_mass, self.foot_mass, self.spring_stiffness, *self.trunk_inertia) <= 0:
            raise ValueError("masses, inertias and stiffness must be positive")

    @property
    def total_mass(self) -> float:
        return self.trunk_mass + 4 * self.foot_mass

    def to_dict(self) -> dict:
        d = asdict(self)
        d["geometry"] = asdict(self.geometry)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        d = dict(d)
        if "geometry" in d:
            g = dict(d["geometry"])
            g["neutral_foot"] = tuple(g.get("neutral_foot", (0.0, 0.11)))
            d["geometry"] = LegGeometry(**g)
        for key in ("trunk_inertia", "trunk_half_extents"):
            if key in d:
                d[key] = tuple(d[key])
        if "hip_positions" in d:
            d["hip_positions"] = tuple(tuple(h) for h in d["hip_positions"])
        return cls(**d)


def pack_params(model: RobotModel, contact: ContactModel) -> np.ndarray:
    p = np.zeros(_P_SIZE)
    p[0] = model.trunk_mass
    p[1:4] = model.trunk_inertia
    p[4] = model.foot_mass
    p[5] = model.spring_stiffness
    p[6] = model.motor_vel_cap
    p[7] = model.servo_gain
    p[8] = model.geometry.l1
    p[9] = model.geometry.l2
    p[10] = model.gravity
    p[11] = model.link_inertia
    p[12] = model.joint_damping
    p[13] = contact.ground_stiffness
    p[14] = contact.ground_damping
    p[15] = contact.friction_coefficient
    p[16:28] = np.asarray(model.hip_positions, dtype=float).ravel()
    p[28:31] = model.trunk_half_extents
    return p


@dataclass
class RobotState:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z), body to world
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray  # body frame
    theta: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    thetad: np.ndarray
    contacts: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation, self.linear_velocity,
                               self.angular_velocity, self.theta, self.q, self.qd, self.thetad])

    @classmethod
    def from_vector(cls, x: np.ndarray, contacts=None) -> "RobotState":
        x = np.array(x, dtype=float)
        c = np.zeros(4, dtype=bool) if contacts is None else np.asarray(contacts, dtype=bool).copy()
        return cls(x[POS], x[QUAT], x[VEL], x[OMEGA], x[THETA], x[Q], x[QD], x[THETAD], c)

    def copy(self) -> "RobotState":
        return RobotState.from_vector(self.to_vector(), self.contacts)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


# --- small numba helpers ---------------------------------------------------

@njit(cache=True)
def _quat_to_mat(w, x, y, z, R):
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _contact(pz, vx, vy, vz, kg, dg, mu, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if pz > 0.0:
        return
    n = -kg * pz - dg * vz
    if n < 0.0:
        n = 0.0
    out[2] = n
    vt = math.sqrt(vx * vx + vy * vy)
    if vt > 0.0:
        ft = min(mu * n, dg * vt)
        out[0] = -ft * vx / vt
        out[1] = -ft * vy / vt


@njit(cache=True)
def _servo(theta, cmd, gain, cap, dt):
    rate = gain * (cmd - theta)
    if rate > cap:
        rate = cap
    elif rate < -cap:
        rate = -cap
    return theta + dt * rate, rate


@njit(cache=True)
def _leg_terms(p, leg, q1, q2, qd1, qd2, s, Jb, bias):
    """Foot position ``s`` (body frame), body Jacobian and q-only bias acceleration."""
    l1 = p[8]
    l2 = p[9]
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    s12 = math.sin(q1 + q2)
    c12 = math.cos(q1 + q2)
    base = 16 + 3 * leg
    s[0] = p[base] + l1 * s1 + l2 * s12
    s[1] = p[base + 1]
    s[2] = p[base + 2] - (l1 * c1 + l2 * c12)
    Jb[0, 0] = l1 * c1 + l2 * c12
    Jb[0, 1] = l2 * c12
    Jb[1, 0] = 0.0
    Jb[1, 1] = 0.0
    Jb[2, 0] = l1 * s1 + l2 * s12
    Jb[2, 1] = l2 * s12
    w = qd1 + qd2
    bias[0] = -l1 * s1 * qd1 * qd1 - l2 * s12 * w * w
    bias[1] = 0.0
    bias[2] = l1 * c1 * qd1 * qd1 + l2 * c12 * w * w


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _physics_step(x, cmd, p, dt, normal_forces):
    m_t = p[0]
    m_f = p[4]
    k = p[5]
    cap = p[6]
    gain = p[7]
    g = p[10]
    i_link = p[11]
    b_joint = p[12]
    kg = p[13]
    dg = p[14]
    mu = p[15]

    # motor servos
    for j in range(8):
        th, rate = _servo(x[13 + j], cmd[j], gain, cap, dt)
        x[13 + j] = th
        x[37 + j] = rate

    R = np.empty((3, 3))
    _quat_to_mat(x[3], x[4], x[5], x[6], R)
    om = x[10:13].copy()

    M = np.zeros((14, 14))
    rhs = np.zeros(14)
    for a in range(3):
        M[a, a] = m_t
        M[3 + a, 3 + a] = p[1 + a]
    rhs[2] = -m_t * g
    Iw = np.empty(3)
    for a in range(3):
        Iw[a] = p[1 + a] * om[a]
    gyro = np.empty(3)
    _cross(om, Iw, gyro)
    for a in range(3):
        rhs[3 + a] -= gyro[a]

    s = np.empty(3)
    Jb = np.empty((3, 2))
    bq = np.empty(3)
    A = np.zeros((3, 14))
    tmp = np.empty(3)
    tmp2 = np.empty(3)
    u = np.empty(3)
    bias = np.empty(3)
    fc = np.empty(3)
    fb = np.empty(3)
    vb = np.empty(3)
    for leg in range(4):
        j0 = 21 + 2 * leg
        q1 = x[j0]
        q2 = x[j0 + 1]
        qd1 = x[j0 + 8]
        qd2 = x[j0 + 9]
        _leg_terms(p, leg, q1, q2, qd1, qd2, s, Jb, bq)
        # relative foot velocity in body frame: J q_dot
        for a in range(3):
            u[a] = Jb[a, 0] * qd1 + Jb[a, 1] * qd2
        # body-frame foot velocity: R^T v + omega x s + J q_dot
        _cross(om, s, tmp)
        for a in range(3):
            vb[a] = R[0, a] * x[7] + R[1, a] * x[8] + R[2, a] * x[9] + tmp[a] + u[a]
        # world foot position and velocity
        pz = x[2] + R[2, 0] * s[0] + R[2, 1] * s[1] + R[2, 2] * s[2]
        vw0 = R[0, 0] * vb[0] + R[0, 1] * vb[1] + R[0, 2] * vb[2]
        vw1 = R[1, 0] * vb[0] + R[1, 1] * vb[1] + R[1, 2] * vb[2]
        vw2 = R[2, 0] * vb[0] + R[2, 1] * vb[1] + R[2, 2] * vb[2]
        _contact(pz, vw0, vw1, vw2, kg, dg, mu, fc)
        normal_forces[leg] = fc[2]
        fc[2] -= m_f * g
        for a in range(3):
            fb[a] = R[0, a] * fc[0] + R[1, a] * fc[1] + R[2, a] * fc[2]
        # bias acceleration: omega x (omega x s) + 2 omega x (J q_dot) + Jdot q_dot
        _cross(om, tmp, tmp2)
        _cross(om, u, tmp)
        for a in range(3):
            bias[a] = tmp2[a] + 2.0 * tmp[a] + bq[a]
        # partial velocities A (body frame): [R^T | -[s]x | J]
        A[:, :] = 0.0
        for a in range(3):
            for b in range(3):
                A[a, b] = R[b, a]
        A[0, 4] = s[2]
        A[0, 5] = -s[1]
        A[1, 3] = -s[2]
        A[1, 5] = s[0]
        A[2, 3] = s[1]
        A[2, 4] = -s[0]
        c0 = 6 + 2 * leg
        for a in range(3):
            A[a, c0] = Jb[a, 0]
            A[a, c0 + 1] = Jb[a, 1]
        cols = (0, 1, 2, 3, 4, 5, c0, c0 + 1)
        for ii in range(8):
            ci = cols[ii]
            acc = 0.0
            for a in range(3):
                acc += A[a, ci] * (fb[a] - m_f * bias[a])
            rhs[ci] += acc
            for jj in range(8):
                cj = cols[jj]
                mm = 0.0
                for a in range(3):
                    mm += A[a, ci] * A[a, cj]
                M[ci, cj] += m_f * mm

    # trunk corners
    for corner in range(8):
        s[0] = p[28] if corner & 1 else -p[28]
        s[1] = p[29] if corner & 2 else -p[29]
        s[2] = -p[30] if corner & 4 else p[30]
        pz = x[2] + R[2, 0] * s[0] + R[2, 1] * s[1] + R[2, 2] * s[2]
        if pz > 0.0:
            continue
        _cross(om, s, tmp)
        for a in range(3):
            vb[a] = R[0, a] * x[7] + R[1, a] * x[8] + R[2, a] * x[9] + tmp[a]
        vw0 = R[0, 0] * vb[0] + R[0, 1] * vb[1] + R[0, 2] * vb[2]
        vw1 = R[1, 0] * vb[0] + R[1, 1] * vb[1] + R[1, 2] * vb[2]
        vw2 = R[2, 0] * vb[0] + R[2, 1] * vb[1] + R[2, 2] * vb[2]
        _contact(pz, vw0, vw1, vw2, kg, dg, mu, fc)
        for a in range(3):
            fb[a] = R[0, a] * fc[0] + R[1, a] * fc[1] + R[2, a] * fc[2]
            rhs[a] += fc[a]
        # torque s x f in body frame
        _cross(s, fb, tmp)
        for a in range(3):
            rhs[3 + a] += tmp[a]

    for j in range(8):
        M[6 + j, 6 + j] += i_link
        rhs[6 + j] += k * (x[13 + j] - x[21 + j]) - b_joint * x[29 + j]

    acc = np.linalg.solve(M, rhs)

    for a in range(3):
        x[7 + a] += dt * acc[a]
        x[10 + a] += dt * acc[3 + a]
    for j in range(8):
        x[29 + j] += dt * acc[6 + j]
    for a in range(3):
        x[a] += dt * x[7 + a]
    for j in range(8):
        x[21 + j] += dt * x[29 + j]

    # orientation: q <- q * exp(omega dt / 2)
    wx = x[10]
    wy = x[11]
    wz = x[12]
    nrm = math.sqrt(wx * wx + wy * wy + wz * wz)
    if nrm > 0.0:
        half = 0.5 * nrm * dt
        sh = math.sin(half) / nrm
        dw = math.cos(half)
        dx = wx * sh
        dy = wy * sh
        dz = wz * sh
        qw, qx, qy, qz = x[3], x[4], x[5], x[6]
        x[3] = qw * dw - qx * dx - qy * dy - qz * dz
        x[4] = qw * dx + qx * dw + qy * dz - qz * dy
        x[5] = qw * dy - qx * dz + qy * dw + qz * dx
        x[6] = qw * dz + qx * dy - qy * dx + qz * dw
    qn = math.sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6])
    for a in range(4):
        x[3 + a] /= qn


@njit(cache=True)
def _simulate(x, cmd, p, dt, n_steps, stats):
    """Run ``n_steps`` with zero-order-held commands.

    ``stats`` rows: 0 max signed q_dot, 1 max signed theta_dot, 2 min q_dot,
    3 min theta_dot (per joint), 4 min normal force over steps (first 4 cols),
    5 max |theta_dot|.
    """
    fn = np.zeros(4)
    for j in range(8):
        stats[0, j] = -np.inf
        stats[1, j] = -np.inf
        stats[2, j] = np.inf
        stats[3, j] = np.inf
        stats[5, j] = 0.0
    for leg in range(4):
        stats[4, leg] = np.inf
    for _ in range(n_steps):
        _physics_step(x, cmd, p, dt, fn)
        for j in range(8):
            qd = x[29 + j]
            td = x[37 + j]
            if qd > stats[0, j]:
                stats[0, j] = qd
            if td > stats[1, j]:
                stats[1, j] = td
            if qd < stats[2, j]:
                stats[2, j] = qd
            if td < stats[3, j]:
                stats[3, j] = td
            if abs(td) > stats[5, j]:
                stats[5, j] = abs(td)
        for leg in range(4):
            if fn[leg] < stats[4, leg]:
                stats[4, leg] = fn[leg]


# --- public API ------------------------------------------------------------

def spring_torque(theta, q, k: float = 2.75):
    return k * (np.asarray(theta) - np.asarray(q))


def motor_servo(theta: float, theta_cmd: float, dt: float, cap: float = 4.0,
                gain: float = 100.0) -> tuple[float, float]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _servo(float(theta), float(theta_cmd), float(gain), float(cap), float(dt))


def contact_force(foot_pos, foot_vel, model: ContactModel = ContactModel()) -> np.ndarray:
    out = np.zeros(3)
    _contact(float(foot_pos[2]), float(foot_vel[0]), float(foot_vel[1]), float(foot_vel[2]),
             model.ground_stiffness, model.ground_damping, model.friction_coefficient, out)
    return out


def quat_to_matrix(q) -> np.ndarray:
    R = np.empty((3, 3))
    _quat_to_mat(float(q[0]), float(q[1]), float(q[2]), float(q[3]), R)
    return R


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def euler_from_quat(q) -> tuple[float, float, float]:
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def foot_positions(state: RobotState, model: RobotModel) -> np.ndarray:
    """World-frame foot positions, shape (4, 3)."""
    R = state.rotation
    g = model.geometry
    hips = np.asarray(model.hip_positions, dtype=float)
    q = state.q.reshape(4, 2)
    out = np.empty((4, 3))
    for leg in range(4):
        q1, q2 = q[leg]
        s = hips[leg] + np.array([g.l1 * math.sin(q1) + g.l2 * math.sin(q1 + q2), 0.0,
                                  -(g.l1 * math.cos(q1) + g.l2 * math.cos(q1 + q2))])
        out[leg] = state.position + R @ s
    return out


def foot_velocities(state: RobotState, model: RobotModel) -> np.ndarray:
    R = state.rotation
    g = model.geometry
    hips = np.asarray(model.hip_positions, dtype=float)
    q = state.q.reshape(4, 2)
    qd = state.qd.reshape(4, 2)
    out = np.empty((4, 3))
    for leg in range(4):
        q1, q2 = q[leg]
        c1, s1 = math.cos(q1), math.sin(q1)
        c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
        s = hips[leg] + np.array([g.l1 * s1 + g.l2 * s12, 0.0, -(g.l1 * c1 + g.l2 * c12)])
        J = np.array([[g.l1 * c1 + g.l2 * c12, g.l2 * c12], [0.0, 0.0],
                      [g.l1 * s1 + g.l2 * s12, g.l2 * s12]])
        vb = np.cross(state.angular_velocity, s) + J @ qd[leg]
        out[leg] = state.linear_velocity + R @ vb
    return out


def mass_matrix(state: RobotState, model: RobotModel) -> np.ndarray:
    """Generalised mass matrix for ``[v, omega, q_dot]`` (energy bookkeeping)."""
    p = pack_params(model, ContactModel())
    x = state.to_vector()
    R = state.rotation
    M = np.zeros((14, 14))
    M[:3, :3] = model.trunk_mass * np.eye(3)
    M[3:6, 3:6] = np.diag(model.trunk_inertia)
    s = np.empty(3)
    Jb = np.empty((3, 2))
    bq = np.empty(3)
    for leg in range(4):
        j0 = 21 + 2 * leg
        _leg_terms(p, leg, x[j0], x[j0 + 1], 0.0, 0.0, s, Jb, bq)
        A = np.zeros((3, 14))
        A[:, :3] = R.T
        A[:, 3:6] = -np.array([[0, -s[2], s[1]], [s[2], 0, -s[0]], [-s[1], s[0], 0]])
        A[:, 6 + 2 * leg:8 + 2 * leg] = Jb
        M += model.foot_mass * A.T @ A
    M[6:, 6:] += model.link_inertia * np.eye(8)
    return M


def mechanical_energy(state: RobotState, model: RobotModel) -> float:
    """Kinetic + gravitational (ground-referenced) + spring energy in J."""
    v = np.concatenate([state.linear_velocity, state.angular_velocity, state.qd])
    kinetic = 0.5 * v @ mass_matrix(state, model) @ v
    feet = foot_positions(state, model)
    grav = model.gravity * (model.trunk_mass * state.position[2] + model.foot_mass * feet[:, 2].sum())
    spring = 0.5 * model.spring_stiffness * np.sum((state.theta - state.q) ** 2)
    return float(kinetic + grav + spring)


def _check_finite(x: np.ndarray):
    if np.all(np.isfinite(x)):
        return
    names = [("trunk position", POS), ("orientation", QUAT), ("trunk velocity", VEL),
             ("angular velocity", OMEGA), ("motor position", THETA), ("joint position", Q),
             ("joint velocity", QD), ("motor velocity", THETAD)]
    for name, sl in names:
        if not np.all(np.isfinite(x[sl])):
            raise SimulationDivergence(f"simulation diverged: non-finite {name}")
    raise SimulationDivergence("simulation diverged")


class Simulator:
    """Holds packed parameters and advances a flat state in place."""

    def __init__(self, model: RobotModel = RobotModel(), contact: ContactModel = ContactModel(),
                 dt: float = PHYSICS_DT):
        self.model = model
        self.contact = contact
        self.dt = dt
        self.params = pack_params(model, contact)
        self.stats = np.zeros((6, N_JOINTS))

    def advance(self, x: np.ndarray, motor_cmds, n_steps: int) -> np.ndarray:
        """Advance ``x`` in place; returns the per-call stats array (see ``_simulate``)."""
        cmd = np.ascontiguousarray(motor_cmds, dtype=float)
        _check_finite(x)
        try:
            _simulate(x, cmd, self.params, self.dt, n_steps, self.stats)
        except np.linalg.LinAlgError:
            _check_finite(x)
            raise SimulationDivergence("simulation diverged: singular mass matrix")
        _check_finite(x)
        return self.stats

    def contacts(self, x: np.ndarray) -> np.ndarray:
        st = RobotState.from_vector(x)
        return foot_positions(st, self.model)[:, 2] <= 0.0


def step_sim(state: RobotState, motor_cmds, model: RobotModel = RobotModel(),
             contact: ContactModel = ContactModel(), dt: float = PHYSICS_DT) -> RobotState:
    """One physics step; returns a new state."""
    sim = Simulator(model, contact, dt)
    x = state.to_vector()
    sim.advance(x, motor_cmds, 1)
    out = RobotState.from_vector(x)
    out.contacts = sim.contacts(x)
    return out


def read_imu(state_prev: RobotState, state: RobotState, dt: float, noise_std=0.0,
             rng: np.random.Generator | None = None, gravity: float = 9.81):
    """Body-frame specific force (finite-differenced) and angular velocity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    acc_world = (state.linear_velocity - state_prev.linear_velocity) / dt
    acc_world = acc_world + np.array([0.0, 0.0, gravity])
    acc = state.rotation.T @ acc_world
    gyro = np.array(state.angular_velocity, dtype=float)
    std = np.broadcast_to(np.asarray(noise_std, dtype=float), (6,))
    if np.any(std > 0):
        if rng is None:
            raise ValueError("noisy IMU readings need an rng")
        noise = rng.normal(0.0, 1.0, 6) * std
        acc = acc + noise[:3]
        gyro = gyro + noise[3:]
    return acc, gyro


def standing_state(model: RobotModel, foot_targets=None, height: float | None = None) -> RobotState:
    """Trunk level and at rest, motors at the IK solution with undeflected springs.

    ``foot_targets`` are hip-frame (x, z_down) points per leg (default: neutral).
    The trunk is placed so the lowest foot touches the ground.
    """
    g = model.geometry
    if foot_targets is None:
        foot_targets = np.tile(np.asarray(g.neutral_foot, dtype=float), (4, 1))
    foot_targets = np.asarray(foot_targets, dtype=float)
    hip, knee, _ = inverse_kinematics(foot_targets[:, 0], foot_targets[:, 1], g)
    q = np.stack([hip, knee], axis=1).ravel()
    if height is None:
        height = float(np.max(foot_targets[:, 1]))
    return RobotState(
        position=np.array([0.0, 0.0, height]),
        orientation=np.array([1.0, 0.0, 0.0, 0.0]),
        linear_velocity=np.zeros(3),
        angular_velocity=np.zeros(3),
        theta=q.copy(), q=q.copy(), qd=np.zeros(8), thetad=np.zeros(8),
    )


def with_velocity(state: RobotState, linear=None, angular=None) -> RobotState:
    out = state.copy()
    if linear is not None:
        out.linear_velocity = np.array(linear, dtype=float)
    if angular is not None:
        out.angular_velocity = np.array(angular, dtype=float)
    return out


__all__ = [
    "ContactModel", "RobotModel", "RobotState", "Simulator", "SimulationDivergence",
    "spring_torque", "motor_servo", "contact_force", "step_sim", "read_imu",
    "standing_state", "mechanical_energy", "foot_positions", "foot_velocities",
    "quat_from_euler", "euler_from_quat", "quat_to_matrix",
]
