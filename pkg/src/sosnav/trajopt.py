"""Augmented-Lagrangian iLQR with certified containment constraints.

The optimizer tracks reference waypoints under discrete dynamics while
keeping the whole robot inside the free region assigned to each timestep.
Containment enters as the scalar constraint alpha_tau(q_tau) <= 1 - margin,
where alpha is the certified minimal scaling of the region and its
configuration gradient comes from the certificate duals.  Constraints are
folded into the objective with a multiplier-penalty scheme; each outer
update re-certifies the whole trajectory, runs a regularized Riccati
backward pass (constraint curvature enters Gauss-Newton style), line
searches the rollout against the augmented objective with the certificates
linearized at the current iterate, and then updates multipliers from the
freshly certified residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailure
from .geometry import Configuration, Polytope, SemialgebraicShape, wrap_angle
from .scaling import OPTIMAL, ScalingProblem, batch_solve

PLANAR_UNICYCLE = "planar_unicycle"
PLANAR_DOUBLE_INTEGRATOR = "planar_double_integrator"
SPATIAL_YAW_KINEMATIC = "spatial_yaw_kinematic"

SUCCESS = "success"
MAX_ITERATIONS = "max_iterations"

FAILED_ALPHA = 1e3   # stand-in when a certificate solve breaks down


@dataclass(frozen=True)
class DynamicsModel:
    """Discrete-time model q_{tau+1} = f(q_tau, u_tau) with analytic Jacobians."""

    kind: str
    dt: float
    state_dim: int
    input_dim: int
    config_tag: str

    def step(self, q: np.ndarray, u: np.ndarray) -> np.ndarray:
        dt = self.dt
        if self.kind == PLANAR_UNICYCLE:
            x, y, th = q
            v, om = u
            return np.array([x + dt * v * math.cos(th),
                             y + dt * v * math.sin(th),
                             th + dt * om])
        if self.kind == PLANAR_DOUBLE_INTEGRATOR:
            return np.array([q[0] + dt * q[2], q[1] + dt * q[3],
                             q[2] + dt * u[0], q[3] + dt * u[1]])
        x, y, z, yaw = q
        c, s = math.cos(yaw), math.sin(yaw)
        return np.array([x + dt * (u[0] * c - u[1] * s),
                         y + dt * (u[0] * s + u[1] * c),
                         z + dt * u[2],
                         yaw + dt * u[3]])

    def jacobians(self, q: np.ndarray, u: np.ndarray):
        dt = self.dt
        if self.kind == PLANAR_UNICYCLE:
            th = q[2]
            v = u[0]
            c, s = math.cos(th), math.sin(th)
            A = np.array([[1.0, 0.0, -dt * v * s],
                          [0.0, 1.0, dt * v * c],
                          [0.0, 0.0, 1.0]])
            B = np.array([[dt * c, 0.0], [dt * s, 0.0], [0.0, dt]])
            return A, B
        if self.kind == PLANAR_DOUBLE_INTEGRATOR:
            A = np.eye(4)
            A[0, 2] = dt
            A[1, 3] = dt
            B = np.zeros((4, 2))
            B[2, 0] = dt
            B[3, 1] = dt
            return A, B
        yaw = q[3]
        c, s = math.cos(yaw), math.sin(yaw)
        A = np.eye(4)
        A[0, 3] = dt * (-u[0] * s - u[1] * c)
        A[1, 3] = dt * (u[0] * c - u[1] * s)
        B = np.array([[dt * c, -dt * s, 0.0, 0.0],
                      [dt * s, dt * c, 0.0, 0.0],
                      [0.0, 0.0, dt, 0.0],
                      [0.0, 0.0, 0.0, dt]])
        return A, B

    def extract_config(self, q: np.ndarray) -> Configuration:
        if self.kind == PLANAR_DOUBLE_INTEGRATOR:
            return Configuration(np.array([q[0], q[1], 0.0]), self.config_tag)
        return Configuration(np.asarray(q, dtype=float), self.config_tag)

    def config_jacobian(self, q: np.ndarray) -> np.ndarray:
        """d(configuration)/d(state); lifts certificate gradients to states."""
        if self.kind == PLANAR_DOUBLE_INTEGRATOR:
            E = np.zeros((3, 4))
            E[0, 0] = 1.0
            E[1, 1] = 1.0
            return E
        return np.eye(self.state_dim)

    def inverse_input(self, q: np.ndarray, q_next: np.ndarray) -> np.ndarray:
        """Input reproducing the step where the model permits, least-squares
        projection otherwise (the unicycle drops lateral motion)."""
        dt = self.dt
        d = np.asarray(q_next, float) - np.asarray(q, float)
        if self.kind == PLANAR_UNICYCLE:
            c, s = math.cos(q[2]), math.sin(q[2])
            return np.array([(d[0] * c + d[1] * s) / dt, wrap_angle(d[2]) / dt])
        if self.kind == PLANAR_DOUBLE_INTEGRATOR:
            return d[2:] / dt
        c, s = math.cos(q[3]), math.sin(q[3])
        return np.array([(d[0] * c + d[1] * s) / dt,
                         (-d[0] * s + d[1] * c) / dt,
                         d[2] / dt,
                         wrap_angle(d[3]) / dt])


_MODEL_DIMS = {
    PLANAR_UNICYCLE: (3, 2, "planar"),
    PLANAR_DOUBLE_INTEGRATOR: (4, 2, "planar"),
    SPATIAL_YAW_KINEMATIC: (4, 4, "spatial"),
}


def make_model(kind: str, dt: float) -> DynamicsModel:
    if kind not in _MODEL_DIMS:
        raise ValueError(f"unknown dynamics model {kind!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    nx, nu, tag = _MODEL_DIMS[kind]
    return DynamicsModel(kind, float(dt), nx, nu, tag)


def dynamics_step(model: DynamicsModel, q, u):
    """One discrete step with its Jacobians."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(u))):
        raise ValueError("dynamics_step requires finite state and input")
    A, B = model.jacobians(q, u)
    return model.step(q, u), A, B


def rollout(model: DynamicsModel, q0, U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    X = np.empty((U.shape[0] + 1, model.state_dim))
    X[0] = np.asarray(q0, dtype=float)
    for t in range(U.shape[0]):
        X[t + 1] = model.step(X[t], U[t])
        if not np.all(np.isfinite(X[t + 1])):
            raise ValueError(f"rollout diverged to a non-finite state at step {t + 1}")
    return X


@dataclass(frozen=True)
class ProblemSpec:
    """Tracking problem over a horizon with per-step region assignments.

    region_index[tau] selects the containment region for step tau from
    region_table (None disables the constraint at that step), so terminal-only
    and full-horizon safety are both expressed by the same field.
    """

    model: DynamicsModel
    T: int
    x_ref: np.ndarray                 # (T+1, nx) reference states
    goal: np.ndarray                  # (nx,) terminal target
    Q: np.ndarray
    R: np.ndarray
    Q_T: np.ndarray
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    x_min: np.ndarray | None = None
    x_max: np.ndarray | None = None
    shape: SemialgebraicShape | None = None
    region_table: tuple[Polytope, ...] = ()
    region_index: tuple = ()
    safety_margin: float = 1e-3

    def __post_init__(self):
        nx, nu = self.model.state_dim, self.model.input_dim
        if self.T < 1:
            raise ValueError("horizon must be at least 1")
        x_ref = np.asarray(self.x_ref, dtype=float)
        if x_ref.shape != (self.T + 1, nx):
            raise ValueError(f"x_ref must have shape {(self.T + 1, nx)}")
        goal = np.asarray(self.goal, dtype=float).ravel()
        if goal.shape != (nx,):
            raise ValueError("goal dimension mismatch")
        Q = _check_weight(self.Q, nx, "Q", definite=False)
        R = _check_weight(self.R, nu, "R", definite=True)
        Q_T = _check_weight(self.Q_T, nx, "Q_T", definite=False)
        region_index = tuple(self.region_index) if self.region_index else (None,) * (self.T + 1)
        if len(region_index) != self.T + 1:
            raise ValueError("region_index must have T+1 entries")
        active = [i for i in region_index if i is not None]
        if active:
            if self.shape is None:
                raise ValueError("containment constraints need a robot shape")
            if min(active) < 0 or max(active) >= len(self.region_table):
                raise ValueError("region_index out of range of region_table")
        for lo, hi, n, name in ((self.u_min, self.u_max, nu, "input"),
                                (self.x_min, self.x_max, nx, "state")):
            if (lo is None) != (hi is None):
                raise ValueError(f"{name} bounds must set both sides")
            if lo is not None:
                lo = np.asarray(lo, float).ravel()
                hi = np.asarray(hi, float).ravel()
                if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
                    raise ValueError(f"bad {name} bounds")
        object.__setattr__(self, "x_ref", x_ref)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q_T", Q_T)
        object.__setattr__(self, "region_index", region_index)
        for name in ("u_min", "u_max", "x_min", "x_max"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).ravel())

    @property
    def has_input_bounds(self) -> bool:
        return self.u_min is not None

    @property
    def has_state_bounds(self) -> bool:
        return self.x_min is not None


def _check_weight(M, n, name, definite):
    M = np.asarray(M, dtype=float)
    if M.shape == (n,):
        M = np.diag(M)
    if M.shape != (n, n) or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be a symmetric {n}x{n} matrix")
    eigs = np.linalg.eigvalsh(M)
    if definite and eigs[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    if not definite and eigs[0] < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass
class ALState:
    """Multiplier-penalty bookkeeping for the constraint families."""

    mu: float = 1.0
    growth: float = 10.0
    clamp: float = 1e8
    violation: float = math.inf
    lam_input: np.ndarray | None = None      # (T, 2*nu)
    lam_state: np.ndarray | None = None      # (T+1, 2*nx)
    lam_safety: np.ndarray | None = None     # (T+1,)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("penalty must be positive")
        if not self.growth > 1:
            raise ValueError("penalty growth must exceed 1")


def init_al_state(spec: ProblemSpec, mu0: float = 1.0, growth: float = 10.0,
                  clamp: float = 1e8) -> ALState:
    al = ALState(mu=mu0, growth=growth, clamp=clamp)
    if spec.has_input_bounds:
        al.lam_input = np.zeros((spec.T, 2 * spec.model.input_dim))
    if spec.has_state_bounds:
        al.lam_state = np.zeros((spec.T + 1, 2 * spec.model.state_dim))
    if any(i is not None for i in spec.region_index):
        al.lam_safety = np.zeros(spec.T + 1)
    return al


@dataclass(frozen=True)
class SafetyInfo:
    """Certified scalings and state-space gradients for the current iterate."""

    alphas: np.ndarray        # (T+1,), 0 where no region is assigned
    grads: np.ndarray         # (T+1, nx)
    active: np.ndarray        # (T+1,) bool, True where a region is assigned


def certify_trajectory(spec: ProblemSpec, problems, X: np.ndarray,
                       tol: float = 1e-8, threads: int | None = None,
                       want_gradient: bool = True) -> SafetyInfo:
    """Certificates for every constrained step, grouped per region so each
    group shares its assembled problem structure."""
    T1 = spec.T + 1
    nx = spec.model.state_dim
    alphas = np.zeros(T1)
    grads = np.zeros((T1, nx))
    active = np.array([i is not None for i in spec.region_index])
    groups: dict[int, list[int]] = {}
    for t, idx in enumerate(spec.region_index):
        if idx is not None:
            groups.setdefault(idx, []).append(t)
    for idx, taus in groups.items():
        configs = [spec.model.extract_config(X[t]) for t in taus]
        results = batch_solve(problems[idx], configs, tol=tol,
                              want_gradient=want_gradient, threads=threads)
        for t, (sol, grad) in zip(taus, results):
            if sol.status == OPTIMAL and math.isfinite(sol.alpha):
                alphas[t] = sol.alpha
                if grad is not None:
                    E = spec.model.config_jacobian(X[t])
                    grads[t] = E.T @ grad.dalpha_dq
            else:
                alphas[t] = FAILED_ALPHA
    return SafetyInfo(alphas, grads, active)


def _penalty_value(c: np.ndarray, lam: np.ndarray, mu: float) -> float:
    z = np.maximum(0.0, lam + mu * c)
    return float(np.sum(z * z - lam * lam) / (2.0 * mu))


def trajectory_cost(spec: ProblemSpec, X: np.ndarray, U: np.ndarray) -> float:
    dx = X[:-1] - spec.x_ref[:-1]
    cost = 0.5 * float(np.sum(dx * (dx @ spec.Q.T)))
    cost += 0.5 * float(np.sum(U * (U @ spec.R.T)))
    dT = X[-1] - spec.goal
    return cost + 0.5 * float(dT @ spec.Q_T @ dT)


def _stage_residuals(spec: ProblemSpec, t: int, x, u):
    """Box-constraint residuals c <= 0 at step t (input rows empty at t=T)."""
    rows_u = np.empty(0)
    rows_x = np.empty(0)
    if spec.has_input_bounds and u is not None:
        rows_u = np.concatenate([u - spec.u_max, spec.u_min - u])
    if spec.has_state_bounds:
        rows_x = np.concatenate([x - spec.x_max, spec.x_min - x])
    return rows_u, rows_x


def al_objective(spec: ProblemSpec, al: ALState, X: np.ndarray, U: np.ndarray,
                 safety: SafetyInfo, linearize_at: np.ndarray | None = None) -> float:
    """Augmented objective; with ``linearize_at`` the certified scalings are
    first-order expanded from that state trajectory (line-search surrogate)."""
    total = trajectory_cost(spec, X, U)
    for t in range(spec.T + 1):
        u = U[t] if t < spec.T else None
        rows_u, rows_x = _stage_residuals(spec, t, X[t], u)
        if rows_u.size:
            total += _penalty_value(rows_u, al.lam_input[t], al.mu)
        if rows_x.size:
            total += _penalty_value(rows_x, al.lam_state[t], al.mu)
        if al.lam_safety is not None and safety.active[t]:
            a = safety.alphas[t]
            if linearize_at is not None:
                a = a + safety.grads[t] @ (X[t] - linearize_at[t])
            c = np.array([a - (1.0 - spec.safety_margin)])
            total += _penalty_value(c, al.lam_safety[t:t + 1], al.mu)
    return total


def max_violation(spec: ProblemSpec, X: np.ndarray, U: np.ndarray,
                  safety: SafetyInfo) -> float:
    """Largest positive constraint residual across the trajectory."""
    worst = 0.0
    for t in range(spec.T + 1):
        u = U[t] if t < spec.T else None
        rows_u, rows_x = _stage_residuals(spec, t, X[t], u)
        for rows in (rows_u, rows_x):
            if rows.size:
                worst = max(worst, float(np.max(rows)))
        if safety.active[t]:
            worst = max(worst, float(safety.alphas[t] - (1.0 - spec.safety_margin)))
    return worst


@dataclass(frozen=True)
class Gains:
    K: np.ndarray      # (T, nu, nx)
    d: np.ndarray      # (T, nu)
    dV1: float         # sum d' Q_u           (expected first-order change)
    dV2: float         # 0.5 sum d' Q_uu d    (expected curvature term)


def _al_derivatives(rows, lam, mu, J):
    """Gradient and Gauss-Newton Hessian of the penalty for residual rows
    with constant Jacobian J."""
    z = lam + mu * rows
    act = z > 0
    grad = J.T @ (np.where(act, z, 0.0))
    H = mu * (J[act].T @ J[act]) if np.any(act) else np.zeros((J.shape[1], J.shape[1]))
    return grad, H


def backward_pass(spec: ProblemSpec, X: np.ndarray, U: np.ndarray,
                  al: ALState, safety: SafetyInfo, prox: float = 0.0,
                  reg_init: float = 0.0, reg_max: float = 1e10) -> Gains:
    """Riccati recursion over the augmented objective.

    Constraint curvature enters as mu * J'J on the active set.  ``prox``
    adds state-space curvature when forming the input-dependent terms,
    biasing the step toward plain gradient descent; the certificate is only
    piecewise smooth (facet and orientation switches), so the caller
    escalates prox when a Gauss-Newton step fails to lower the true
    objective.  The input Hessian is Cholesky-checked and the whole pass
    restarts with a larger regularizer when it loses definiteness.
    """
    nx, nu, T = spec.model.state_dim, spec.model.input_dim, spec.T
    eye_u = np.eye(nu)
    eye_x = np.eye(nx)
    J_u = np.vstack([eye_u, -eye_u])
    J_x = np.vstack([eye_x, -eye_x])
    reg = reg_init
    while True:
        K = np.zeros((T, nu, nx))
        d = np.zeros((T, nu))
        dV1 = dV2 = 0.0

        def stage_terms(t):
            x = X[t]
            u = U[t] if t < T else None
            if t < T:
                lx = spec.Q @ (x - spec.x_ref[t])
                lxx = spec.Q.copy()
                lu = spec.R @ u
                luu = spec.R.copy()
            else:
                lx = spec.Q_T @ (x - spec.goal)
                lxx = spec.Q_T.copy()
                lu = None
                luu = None
            rows_u, rows_x = _stage_residuals(spec, t, x, u)
            if rows_u.size:
                g, H = _al_derivatives(rows_u, al.lam_input[t], al.mu, J_u)
                lu = lu + g
                luu = luu + H
            if rows_x.size:
                g, H = _al_derivatives(rows_x, al.lam_state[t], al.mu, J_x)
                lx = lx + g
                lxx = lxx + H
            if al.lam_safety is not None and safety.active[t]:
                c = np.array([safety.alphas[t] - (1.0 - spec.safety_margin)])
                Jc = safety.grads[t][None, :]
                g, H = _al_derivatives(c, al.lam_safety[t:t + 1], al.mu, Jc)
                lx = lx + g
                lxx = lxx + H
            return lx, lxx, lu, luu

        Vx, Vxx, _, _ = stage_terms(T)
        ok = True
        for t in range(T - 1, -1, -1):
            lx, lxx, lu, luu = stage_terms(t)
            A, B = spec.model.jacobians(X[t], U[t])
            Vxx_p = Vxx + prox * eye_x
            Qx = lx + A.T @ Vx
            Qu = lu + B.T @ Vx
            Qxx = lxx + A.T @ Vxx @ A
            Qux = B.T @ Vxx_p @ A
            Quu = luu + B.T @ Vxx_p @ B
            Quu_reg = Quu + reg * eye_u
            try:
                L = np.linalg.cholesky(0.5 * (Quu_reg + Quu_reg.T))
            except np.linalg.LinAlgError:
                ok = False
                break
            rhs = np.column_stack([Qu, Qux])
            sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            d[t] = -sol[:, 0]
            K[t] = -sol[:, 1:]
            dV1 += float(d[t] @ Qu)
            dV2 += 0.5 * float(d[t] @ Quu_reg @ d[t])
            Vx = Qx + K[t].T @ Quu_reg @ d[t] + K[t].T @ Qu + Qux.T @ d[t]
            Vxx = Qxx + K[t].T @ Quu_reg @ K[t] + K[t].T @ Qux + Qux.T @ K[t]
            Vxx = 0.5 * (Vxx + Vxx.T)
        if ok:
            return Gains(K, d, dV1, dV2)
        reg = max(reg * 10.0, 1e-6)
        if reg > reg_max:
            raise SolverFailure("backward pass lost definiteness beyond the "
                                "regularization cap")


@dataclass(frozen=True)
class ForwardResult:
    X: np.ndarray
    U: np.ndarray
    cost: float
    violation: float     # box residuals exact; certificates linearized at X
    accepted: bool
    scale: float


def forward_pass(spec: ProblemSpec, X: np.ndarray, U: np.ndarray, gains: Gains,
                 al: ALState, safety: SafetyInfo,
                 max_scale: float = 1.0, min_scale: float = 2.0 ** -11) -> ForwardResult:
    """Line-searched rollout of the gains against the augmented objective.

    Certified scalings are linearized at X, so candidate iterates need no
    new certificate solves; the caller re-certifies the accepted iterate
    (shrinking ``max_scale`` when the surrogate overpromised).  On
    exhaustion the input trajectory comes back unchanged.
    """
    base = al_objective(spec, al, X, U, safety)
    model = spec.model
    s = max_scale
    while s >= min_scale:
        Xn = np.empty_like(X)
        Un = np.empty_like(U)
        Xn[0] = X[0]
        finite = True
        for t in range(spec.T):
            Un[t] = U[t] + s * gains.d[t] + gains.K[t] @ (Xn[t] - X[t])
            Xn[t + 1] = model.step(Xn[t], Un[t])
            if not np.all(np.isfinite(Xn[t + 1])):
                finite = False
                break
        if finite:
            obj = al_objective(spec, al, Xn, Un, safety, linearize_at=X)
            expected = -(s * gains.dV1 + s * s * gains.dV2)
            good = (base - obj >= 1e-4 * expected) if expected > 0 \
                else (obj < base - 1e-12)
            if good:
                lin = SafetyInfo(
                    safety.alphas + np.sum(safety.grads * (Xn - X), axis=1),
                    safety.grads, safety.active)
                return ForwardResult(Xn, Un, trajectory_cost(spec, Xn, Un),
                                     max_violation(spec, Xn, Un, lin), True, s)
        s *= 0.5
    return ForwardResult(X, U, trajectory_cost(spec, X, U),
                         max_violation(spec, X, U, safety), False, 0.0)


def _update_multipliers(spec: ProblemSpec, al: ALState, X, U, safety) -> None:
    clamp = al.clamp
    for t in range(spec.T + 1):
        u = U[t] if t < spec.T else None
        rows_u, rows_x = _stage_residuals(spec, t, X[t], u)
        if rows_u.size:
            al.lam_input[t] = np.clip(al.lam_input[t] + al.mu * rows_u, 0.0, clamp)
        if rows_x.size:
            al.lam_state[t] = np.clip(al.lam_state[t] + al.mu * rows_x, 0.0, clamp)
        if al.lam_safety is not None and safety.active[t]:
            c = safety.alphas[t] - (1.0 - spec.safety_margin)
            al.lam_safety[t] = min(max(0.0, al.lam_safety[t] + al.mu * c), clamp)


@dataclass(frozen=True)
class Trajectory:
    X: np.ndarray
    U: np.ndarray
    alphas: np.ndarray
    cost: float
    violation: float
    status: str
    outer_iterations: int
    violation_history: tuple[float, ...] = ()   # one entry per outer iteration

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    def to_records(self) -> dict:
        return {"states": self.X.tolist(), "inputs": self.U.tolist(),
                "alphas": self.alphas.tolist(), "cost": self.cost,
                "violation": self.violation, "status": self.status,
                "outer_iterations": self.outer_iterations,
                "violation_history": list(self.violation_history)}


def initial_inputs(spec: ProblemSpec) -> np.ndarray:
    """Inverse dynamics along the reference states."""
    return np.vstack([spec.model.inverse_input(spec.x_ref[t], spec.x_ref[t + 1])
                      for t in range(spec.T)])


def make_reference(model: DynamicsModel, points: np.ndarray,
                   start_state: np.ndarray | None = None) -> np.ndarray:
    """Reference states from waypoint positions.

    Headings come from finite differences of the waypoints (kept continuous,
    no wrapping, so quadratic tracking costs see no jumps), velocities from
    a constant-speed assumption.  ``start_state`` pins row 0 exactly.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    diffs = np.diff(pts, axis=0)
    if model.kind == PLANAR_DOUBLE_INTEGRATOR:
        vel = np.vstack([diffs, diffs[-1:]]) / model.dt if n > 1 else np.zeros((1, 2))
        x_ref = np.hstack([pts, vel])
    else:
        head = np.zeros(n)
        prev = 0.0
        for t in range(n):
            d = diffs[min(t, n - 2)] if n > 1 else np.zeros(2)
            if np.hypot(d[0], d[1]) > 1e-9:
                prev = math.atan2(d[1], d[0])
            head[t] = prev
        head = np.unwrap(head)
        if model.kind == PLANAR_UNICYCLE:
            x_ref = np.hstack([pts, head[:, None]])
        else:
            x_ref = np.hstack([pts, head[:, None]])   # (x, y, z, yaw)
    if start_state is not None:
        x_ref = x_ref.copy()
        x_ref[0] = np.asarray(start_state, dtype=float)
    return x_ref


def build_problems(spec: ProblemSpec, relaxation_order: int | None = None) -> list:
    """One scaling problem per region-table entry used by the assignment."""
    used = {i for i in spec.region_index if i is not None}
    return [ScalingProblem(spec.shape, reg, relaxation_order) if i in used else None
            for i, reg in enumerate(spec.region_table)]


def _minnorm_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm point of the segment between two subgradients.

    At a certificate ridge the value function is a max of smooth branches;
    the minimum-norm element of the bundle is a descent direction for the
    max, whereas either branch gradient alone can point uphill.
    """
    d = b - a
    dd = float(d @ d)
    if dd <= 1e-18:
        return a
    t = float(np.clip((a @ (a - b)) / dd, 0.0, 1.0))
    return a + t * d


def _ridge_enrich(spec: ProblemSpec, al: ALState, safety: SafetyInfo,
                  rejected: SafetyInfo) -> tuple[SafetyInfo, bool]:
    """Blend branch gradients harvested from a rejected candidate.

    A candidate whose surrogate improved but whose certified objective rose
    crossed onto another facet branch; its certificates carry that branch's
    gradient.  Where the branch disagrees with the working gradient on an
    active constraint, replace the working gradient with the minimum-norm
    combination so the next backward pass respects both sides of the ridge.
    """
    bound = 1.0 - spec.safety_margin
    grads = safety.grads.copy()
    changed = False
    for t, ridx in enumerate(spec.region_index):
        if ridx is None:
            continue
        lam_hat = al.lam_safety[t] + al.mu * (safety.alphas[t] - bound)
        if lam_hat <= 0.0:
            continue
        a, b = safety.grads[t], rejected.grads[t]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na <= 1e-12 or nb <= 1e-12:
            continue
        if a @ b < 0.999 * na * nb:
            grads[t] = _minnorm_pair(a, b)
            changed = True
    if not changed:
        return safety, False
    return SafetyInfo(alphas=safety.alphas, grads=grads,
                      active=safety.active), True


def _descent_step(spec: ProblemSpec, problems, X, U, al: ALState,
                  safety: SafetyInfo, prev_obj: float, prox: float,
                  has_safety: bool, cert_tol: float, threads):
    """One true-objective descent attempt with ridge-aware retries.

    The surrogate line search can overpromise because certificates are
    linearized; each accepted candidate is re-certified and kept only if
    the exact objective decreased, halving the step cap otherwise.  When
    every cap fails, gradients harvested from the rejected candidates feed
    a bundle retry before giving up on the direction.
    """
    work = safety
    for _ in range(3):
        gains = backward_pass(spec, X, U, al, work, prox=prox)
        cap = 1.0
        harvested = None
        while cap >= 2.0 ** -11:
            fr = forward_pass(spec, X, U, gains, al, work, max_scale=cap)
            if not fr.accepted:
                break
            if has_safety:
                cand = certify_trajectory(spec, problems, fr.X,
                                          tol=cert_tol, threads=threads)
            else:
                cand = work
            obj = al_objective(spec, al, fr.X, fr.U, cand)
            if obj < prev_obj - 1e-12:
                return True, obj, fr.X, fr.U, cand
            if harvested is None:
                harvested = cand
            cap = fr.scale * 0.5
        if not has_safety or harvested is None:
            break
        work, changed = _ridge_enrich(spec, al, work, harvested)
        if not changed:
            break
    return False, prev_obj, X, U, safety


def solve(spec: ProblemSpec, problems=None, ctol: float = 1e-4,
          mu0: float = 1.0, growth: float = 10.0, clamp: float = 1e8,
          mu_cap: float = 1e6, max_outer: int = 60, max_inner: int = 30,
          inner_tol: float = 1e-4, cert_tol: float = 1e-8,
          threads: int | None = None, U0: np.ndarray | None = None) -> Trajectory:
    """Run the outer multiplier loop until every constraint residual is
    below ctol; the returned scalings come from a final, independent
    re-certification of the accepted trajectory."""
    has_safety = any(i is not None for i in spec.region_index)
    if has_safety and problems is None:
        problems = build_problems(spec)
    search_tol = max(cert_tol, 1e-6)
    al = init_al_state(spec, mu0=mu0, growth=growth, clamp=clamp)
    U = initial_inputs(spec) if U0 is None else np.array(U0, dtype=float)
    X = rollout(spec.model, spec.x_ref[0], U)
    safety = certify_trajectory(spec, problems, X, tol=cert_tol, threads=threads) \
        if has_safety else SafetyInfo(np.zeros(spec.T + 1),
                                      np.zeros((spec.T + 1, spec.model.state_dim)),
                                      np.zeros(spec.T + 1, dtype=bool))

    status = MAX_ITERATIONS
    outer_used = max_outer
    c_prev = math.inf
    history = []
    for outer in range(max_outer):
        prev_obj = al_objective(spec, al, X, U, safety)
        steps = 0
        attempts = 0
        prox = 0.0
        while steps < max_inner and attempts < max_inner + 20:
            attempts += 1
            improved, obj, X, U, safety = _descent_step(
                spec, problems, X, U, al, safety, prev_obj, prox,
                has_safety, search_tol, threads)
            if not improved:
                # Gauss-Newton direction failed against the true objective
                # even after ridge enrichment; bias toward gradient descent.
                if prox >= 1e6:
                    break
                prox = max(prox * 10.0, 1e-2)
                continue
            steps += 1
            prox *= 0.1
            if prox < 1e-9:
                prox = 0.0
            if prev_obj - obj <= inner_tol * (abs(prev_obj) + 1.0):
                prev_obj = obj
                break
            prev_obj = obj
        c = max_violation(spec, X, U, safety)
        al.violation = c
        history.append(c)
        if c < ctol:
            status = SUCCESS
            outer_used = outer
            break
        _update_multipliers(spec, al, X, U, safety)
        if c > 0.5 * c_prev:
            al.mu = min(al.mu * al.growth, mu_cap)
        c_prev = c

    # Independent final certification; never trust the cached values.
    if has_safety:
        final = certify_trajectory(spec, problems, X, tol=cert_tol,
                                   threads=threads, want_gradient=False)
    else:
        final = safety
    violation = max_violation(spec, X, U, final)
    if status == SUCCESS and violation >= ctol:
        status = MAX_ITERATIONS
    return Trajectory(X=X, U=U, alphas=final.alphas,
                      cost=trajectory_cost(spec, X, U), violation=violation,
                      status=status, outer_iterations=outer_used,
                      violation_history=tuple(history))
