"""Nonlinear state-space models with joint state/parameter propagation.

A model owns a continuous-time derivative for its physical states, a
measurement map on the augmented state [x, theta], and the step size dt.
Discrete one-step propagation is a fixed-step 4th-order Runge-Kutta
integration of the physical block; the parameter block passes through
untouched. Jacobians of the discrete step and of the measurement map are
computed by central finite differences, so a model only has to supply f
and h.

Array convention: every callable is vectorized over leading axes, i.e.
`derivative_fn` maps (..., n) states (plus (..., p) parameters) to (..., n)
derivatives. This lets one batched call evaluate a whole finite-difference
stencil or a whole trajectory of measurement residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError

__all__ = [
    "ModelSpec",
    "AugmentedState",
    "SmdParams",
    "derivative",
    "propagate",
    "state_jacobian",
    "measure",
    "measurement_jacobian",
    "make_smd_model",
    "register_model",
    "get_model",
]

# Central finite-difference step: absolute floor 1e-6, relative 1e-6.
_FD_STEP = 1e-6


@dataclass(frozen=True)
class ModelSpec:
    """Definition of one state-space model.

    derivative_fn(x, theta, t, u) -> dx/dt for the physical block, vectorized
    over leading axes of x/theta. measurement_fn(X) maps the augmented state
    (..., n+p) to measurements (..., m). control_fn(t), when present, supplies
    the exogenous input passed as u (None otherwise).
    """

    model_id: str
    n_states: int
    n_params: int
    n_meas: int
    dt: float
    derivative_fn: Callable[..., np.ndarray]
    measurement_fn: Callable[[np.ndarray], np.ndarray]
    control_fn: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if self.n_meas < 1:
            raise ValueError("n_meas must be >= 1")
        if self.n_params < 0:
            raise ValueError("n_params must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    @property
    def n_aug(self) -> int:
        return self.n_states + self.n_params

    def with_dt(self, dt: float) -> "ModelSpec":
        return replace(self, dt=dt)


@dataclass
class AugmentedState:
    """Physical states and parameters stacked as the filter state X = [x, theta]."""

    x: np.ndarray
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.theta))):
            raise ValueError("augmented state entries must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.theta])

    def __array__(self, dtype=None, copy=None):
        v = self.as_vector()
        return v.astype(dtype) if dtype is not None else v

    def __len__(self) -> int:
        return self.x.size + self.theta.size

    @classmethod
    def from_vector(cls, model: ModelSpec, vec: np.ndarray) -> "AugmentedState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (model.n_aug,):
            raise ValueError(
                f"expected augmented vector of length {model.n_aug}, got shape {vec.shape}")
        return cls(x=vec[: model.n_states], theta=vec[model.n_states:])


@dataclass
class SmdParams:
    """Spring-mass-damper coefficients: linear spring, damper, cubic spring."""

    theta1: float = 4.0
    theta2: float = 0.4
    theta3: float = 0.6

    def as_vector(self) -> np.ndarray:
        v = np.array([self.theta1, self.theta2, self.theta3], dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("SMD parameters must be finite")
        return v


def _as_aug_vector(model: ModelSpec, state) -> np.ndarray:
    vec = np.asarray(state, dtype=float)
    if vec.shape[-1] != model.n_aug:
        raise ValueError(
            f"state dimension {vec.shape[-1]} does not match model "
            f"n_states+n_params={model.n_aug}")
    return vec


def derivative(model: ModelSpec, state, t: float = 0.0) -> np.ndarray:
    """Time derivative of the augmented state; the parameter block is constant (0)."""
    vec = _as_aug_vector(model, state)
    n = model.n_states
    u = model.control_fn(t) if model.control_fn is not None else None
    dx = model.derivative_fn(vec[..., :n], vec[..., n:], t, u)
    out = np.zeros_like(vec)
    out[..., :n] = dx
    return out


def propagate(model: ModelSpec, state, dt: float | None = None) -> np.ndarray:
    """Advance the augmented state one step of dt with fixed-step RK4.

    Only the physical block is integrated; the parameter block is copied
    bit-for-bit. dt=0 returns the input unchanged. Vectorized over leading
    axes of `state`.
    """
    vec = _as_aug_vector(model, state)
    dt = model.dt if dt is None else dt
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return vec.copy()
    n = model.n_states
    x = vec[..., :n]
    th = vec[..., n:]
    f = model.derivative_fn
    u0 = model.control_fn(0.0) if model.control_fn is not None else None
    uh = model.control_fn(0.5 * dt) if model.control_fn is not None else None
    u1 = model.control_fn(dt) if model.control_fn is not None else None
    k1 = f(x, th, 0.0, u0)
    k2 = f(x + 0.5 * dt * k1, th, 0.5 * dt, uh)
    k3 = f(x + 0.5 * dt * k2, th, 0.5 * dt, uh)
    k4 = f(x + dt * k3, th, dt, u1)
    out = vec.copy()
    out[..., :n] = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("state propagation produced non-finite values")
    return out


def _fd_steps(vec: np.ndarray) -> np.ndarray:
    return np.maximum(_FD_STEP, _FD_STEP * np.abs(vec))


def state_jacobian(model: ModelSpec, state, dt: float | None = None) -> np.ndarray:
    """Jacobian of the one-step discrete map w.r.t. the augmented state.

    Central finite differences on `propagate` for the physical rows; the
    parameter rows are exactly [0 I] since parameters map to themselves.
    """
    vec = _as_aug_vector(model, state)
    if vec.ndim != 1:
        raise ValueError("state_jacobian expects a single state vector")
    dt = model.dt if dt is None else dt
    d = model.n_aug
    n = model.n_states
    if dt == 0.0:
        return np.eye(d)
    h = _fd_steps(vec)
    pert = np.concatenate([np.tile(vec, (d, 1)) + np.diag(h),
                           np.tile(vec, (d, 1)) - np.diag(h)])
    prop = propagate(model, pert, dt)
    jac = np.zeros((d, d))
    jac[:n, :] = ((prop[:d, :n] - prop[d:, :n]) / (2.0 * h[:, None])).T
    jac[n:, n:] = np.eye(model.n_params)
    return jac


def measure(model: ModelSpec, state) -> np.ndarray:
    """Measurement map h applied to the augmented state (vectorized)."""
    vec = _as_aug_vector(model, state)
    z = np.asarray(model.measurement_fn(vec), dtype=float)
    if z.shape[-1] != model.n_meas:
        raise ValueError(
            f"measurement_fn returned length {z.shape[-1]}, expected {model.n_meas}")
    return z


def measurement_jacobian(model: ModelSpec, state) -> np.ndarray:
    """m x (n+p) Jacobian of h by central finite differences on `measure`."""
    vec = _as_aug_vector(model, state)
    if vec.ndim != 1:
        raise ValueError("measurement_jacobian expects a single state vector")
    d = model.n_aug
    h = _fd_steps(vec)
    pert = np.concatenate([np.tile(vec, (d, 1)) + np.diag(h),
                           np.tile(vec, (d, 1)) - np.diag(h)])
    z = measure(model, pert)
    return ((z[:d] - z[d:]) / (2.0 * h[:, None])).T


def batched_state_jacobians(model: ModelSpec, states: np.ndarray,
                            dt: float | None = None) -> np.ndarray:
    """Discrete-step Jacobians for a whole (K, n+p) array of states at once.

    One vectorized propagate call evaluates the entire finite-difference
    stencil for all K states; returns (K, n+p, n+p).
    """
    states = np.asarray(states, dtype=float)
    kcount, d = states.shape
    n = model.n_states
    dt = model.dt if dt is None else dt
    if dt == 0.0:
        return np.broadcast_to(np.eye(d), (kcount, d, d)).copy()
    h = np.maximum(_FD_STEP, _FD_STEP * np.abs(states))           # (K, d)
    eye = np.eye(d)
    plus = states[:, None, :] + h[:, :, None] * eye               # (K, d, d)
    minus = states[:, None, :] - h[:, :, None] * eye
    prop = propagate(model, np.concatenate([plus, minus], axis=1), dt)
    diff = prop[:, :d, :n] - prop[:, d:, :n]                      # (K, d, n)
    jac = np.zeros((kcount, d, d))
    jac[:, :n, :] = np.swapaxes(diff / (2.0 * h[:, :, None]), 1, 2)
    jac[:, n:, n:] = eye[n:, n:]
    return jac


# ---------------------------------------------------------------------------
# Spring-mass-damper benchmark model
# ---------------------------------------------------------------------------

def _smd_derivative(x, theta, t, u):
    # x1' = x2 ; x2' = -th1*x1 - th2*x2 - th3*x1^3  (weak cubic spring)
    x1 = x[..., 0]
    x2 = x[..., 1]
    th1 = theta[..., 0]
    th2 = theta[..., 1]
    th3 = theta[..., 2]
    return np.stack([x2, -th1 * x1 - th2 * x2 - th3 * x1 ** 3], axis=-1)


def _smd_measurement(vec):
    # Both physical states measured directly: H = [I2, 0].
    return np.asarray(vec)[..., :2].copy()


def make_smd_model(dt: float = 0.1) -> ModelSpec:
    """Spring-mass-damper with a weak cubic spring; both states measured."""
    return ModelSpec(
        model_id="smd",
        n_states=2,
        n_params=3,
        n_meas=2,
        dt=dt,
        derivative_fn=_smd_derivative,
        measurement_fn=_smd_measurement,
    )


_MODEL_FACTORIES: dict[str, Callable[..., ModelSpec]] = {"smd": make_smd_model}


def register_model(model_id: str, factory: Callable[..., ModelSpec]) -> None:
    """Register a model factory under a string id for config-driven lookup."""
    if not callable(factory):
        raise TypeError("factory must be callable")
    _MODEL_FACTORIES[model_id] = factory


def get_model(model_id: str, dt: float | None = None) -> ModelSpec:
    if model_id not in _MODEL_FACTORIES:
        raise KeyError(
            f"unknown model '{model_id}' (registered: {sorted(_MODEL_FACTORIES)})")
    model = _MODEL_FACTORIES[model_id]()
    if dt is not None:
        model = model.with_dt(dt)
    return model
