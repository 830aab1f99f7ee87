"""Gravitational focus of attention.

The gaze ``a`` is a damped particle pulled by masses placed on brightness
edges and on moving pixels::

    ä + ρ ȧ = g(a),   g(a) = −(2π)⁻¹ Σ_z μ(z) (a − z) / max(‖a − z‖², ε)

``g`` is the discretized potential gradient over pixel centers; it points
toward the masses, so the gaze is attracted by them.  Integration is
semi-implicit Euler with step ``dt``.  A frame is a saccade when the
speed after the step exceeds ``ν``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

import config
from memory.models import AttentionState, FlowField, Frame, StreamBundle
from services.errors import NonFiniteError
from services.log import debug, log
from services.scenes import brightness


@dataclass(frozen=True)
class AttentionParams:
    alpha_b: float = config.ALPHA_B
    alpha_m: float = config.ALPHA_M
    rho: float = config.DISSIPATION
    nu: float = config.SACCADE_THRESHOLD
    dt: float = config.INTEGRATION_STEP
    inhibition_strength: float = config.INHIBITION_STRENGTH
    inhibition_radius: float = config.INHIBITION_RADIUS
    inhibition_decay: float = config.INHIBITION_DECAY
    eps_phi: float = config.SINGULARITY_FLOOR

    def problems(self) -> list[str]:
        out = []
        if self.alpha_b < 0:
            out.append("alpha_b must be >= 0")
        if self.alpha_m < 0:
            out.append("alpha_m must be >= 0")
        if self.rho <= 0:
            out.append("rho must be > 0")
        if self.nu <= 0:
            out.append("nu must be > 0")
        if self.dt <= 0:
            out.append("dt must be > 0")
        if self.inhibition_strength < 0:
            out.append("inhibition_strength must be >= 0")
        if self.inhibition_radius < 0:
            out.append("inhibition_radius must be >= 0")
        if not 0 <= self.inhibition_decay < 1:
            out.append("inhibition_decay must be in [0, 1)")
        if self.eps_phi <= 0:
            out.append("eps_phi must be > 0")
        return out


# ── Masses ───────────────────────────────────────────────


def _axis_gradient(field: np.ndarray, axis: int) -> np.ndarray:
    if field.shape[axis] < 2:
        return np.zeros_like(field)
    return np.gradient(field, axis=axis)


def compute_masses(
    frame: Frame,
    flow: FlowField,
    inhibition: Optional[np.ndarray],
    params: AttentionParams,
) -> np.ndarray:
    """Mass field ``μ = α_b |∇brightness| + α_m ‖v‖ − inhibition``, clamped at 0.

    The brightness gradient uses central differences inside the frame and
    one-sided differences on the border.
    """
    b = brightness(frame)
    gy = _axis_gradient(b, 0)
    gx = _axis_gradient(b, 1)
    mu = params.alpha_b * np.sqrt(gx * gx + gy * gy) + params.alpha_m * flow.magnitude()
    if inhibition is not None:
        mu = mu - inhibition
    return np.maximum(mu, 0.0)


def potential_gradient(masses: np.ndarray, x: Sequence[float], eps_phi: float) -> np.ndarray:
    """Potential gradient at *x* = (x, y), 1-based; returns (g_x, g_y)."""
    h, w = masses.shape
    dx = x[0] - np.arange(1, w + 1, dtype=np.float64)[None, :]
    dy = x[1] - np.arange(1, h + 1, dtype=np.float64)[:, None]
    r2 = np.maximum(dx * dx + dy * dy, eps_phi)
    scale = -1.0 / (2.0 * math.pi)
    return np.array([
        scale * float(np.sum(masses * dx / r2)),
        scale * float(np.sum(masses * dy / r2)),
    ])


# ── Dynamics ─────────────────────────────────────────────


def step_attention(
    state: AttentionState,
    masses: np.ndarray,
    params: AttentionParams,
) -> AttentionState:
    """One semi-implicit Euler step of the damped gaze dynamics.

    The position is clamped to ``[1, w] × [1, h]``; on a clamped axis the
    velocity component normal to the border is zeroed.
    """
    h, w = masses.shape
    pos = np.asarray(state.position, dtype=np.float64)
    vel = np.asarray(state.velocity, dtype=np.float64)

    g = potential_gradient(masses, pos, params.eps_phi)
    vel = vel + params.dt * (-params.rho * vel + g)
    pos = pos + params.dt * vel

    for axis, hi in ((0, w), (1, h)):
        if pos[axis] < 1.0 or pos[axis] > hi:
            pos[axis] = min(max(pos[axis], 1.0), float(hi))
            vel[axis] = 0.0

    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise NonFiniteError("step_attention", f"position={pos.tolist()} velocity={vel.tolist()}")

    speed = float(np.hypot(vel[0], vel[1]))
    return AttentionState(
        position=(float(pos[0]), float(pos[1])),
        velocity=(float(vel[0]), float(vel[1])),
        saccade=speed > params.nu,
    )


def update_inhibition(
    field: np.ndarray,
    position: Sequence[float],
    params: AttentionParams,
) -> np.ndarray:
    """Decay the inhibition field by κ and deposit η on the disk around *position*."""
    out = params.inhibition_decay * field
    if params.inhibition_strength > 0:
        h, w = field.shape
        ys, xs = np.mgrid[1:h + 1, 1:w + 1]
        disk = (xs - position[0]) ** 2 + (ys - position[1]) ** 2 <= params.inhibition_radius ** 2
        out = out + params.inhibition_strength * disk
    return out


def initial_state(width: int, height: int, velocity: Optional[Sequence[float]] = None,
                  nu: float = config.SACCADE_THRESHOLD) -> AttentionState:
    """Gaze at the frame center with the given starting velocity."""
    vx, vy = velocity if velocity is not None else (config.INITIAL_VX, config.INITIAL_VY)
    return AttentionState(
        position=((width + 1) / 2.0, (height + 1) / 2.0),
        velocity=(float(vx), float(vy)),
        saccade=math.hypot(vx, vy) > nu,
    )


class AttentionSimulator:
    """Frame-by-frame gaze simulation owning the inhibition field.

    The first observed frame returns the initial state; every later frame
    advances one step under that frame's masses.
    """

    def __init__(self, width: int, height: int, params: AttentionParams,
                 start: Optional[AttentionState] = None):
        self.params = params
        self.state = start or initial_state(width, height, nu=params.nu)
        self.inhibition = np.zeros((height, width), dtype=np.float64)
        self.steps = 0

    def observe(self, frame: Frame, flow: FlowField) -> AttentionState:
        if self.steps > 0:
            masses = compute_masses(frame, flow, self.inhibition, self.params)
            self.state = step_attention(self.state, masses, self.params)
        self.inhibition = update_inhibition(self.inhibition, self.state.position, self.params)
        self.steps += 1
        return self.state


def simulate_trajectory(
    bundle: StreamBundle,
    params: AttentionParams,
    start: Optional[AttentionState] = None,
) -> list[AttentionState]:
    """Gaze state for every frame of *bundle*."""
    man = bundle.manifest
    sim = AttentionSimulator(man.width, man.height, params, start)
    trajectory: list[AttentionState] = []
    for t in range(len(bundle)):
        state = sim.observe(bundle.frame(t), bundle.flow(t))
        trajectory.append(state)
        if state.saccade:
            debug("FOA", f"Saccade at frame {t}, position=({state.position[0]:.2f},{state.position[1]:.2f})")
    saccades = sum(s.saccade for s in trajectory)
    log("FOA", f"Simulated {len(trajectory)} frames, {saccades} saccades")
    return trajectory
