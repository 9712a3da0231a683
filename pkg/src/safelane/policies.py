"""Performance controllers: a uniform interface plus three shipped
implementations (scripted lane changer, constant-acceleration dummy, and
a file-loaded MLP forward pass). None of them carries a safety guarantee;
the mode manager treats them all as untrusted."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlAction, KinematicLimits, clamp
from .highway import WorldState

OBS_EGO_FIELDS = 4
OBS_SLOT_FIELDS = 5  # rel x, rel y, speed, heading, presence flag

ACCEL_SCALE = 5.0
STEER_SCALE = math.pi / 6.0

SCRIPTED_KY = 0.15  # rad per meter of lateral error
SCRIPTED_KTHETA = 0.6
SCRIPTED_KV = 1.0


class PolicyFormatError(ValueError):
    """Raised when an MLP weight file fails validation."""


def build_observation(world: WorldState, k: int = 5) -> np.ndarray:
    """Flat observation: ego (x, y, speed, heading) then the k nearest
    obstacles as (rel x, rel y, speed, heading, present), zero-padded.

    Nearest-k by Euclidean distance with ties broken by obstacle index,
    so reordering the obstacle list cannot change the result.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ego = world.ego
    obs = np.zeros(OBS_EGO_FIELDS + OBS_SLOT_FIELDS * k)
    obs[0:4] = (ego.x, ego.y, ego.speed, ego.heading)
    ranked = sorted(
        range(len(world.obstacles)),
        key=lambda i: (
            math.hypot(
                world.obstacles[i].state.x - ego.x, world.obstacles[i].state.y - ego.y
            ),
            world.obstacles[i].state.x,
            world.obstacles[i].state.y,
        ),
    )
    for slot, i in enumerate(ranked[:k]):
        s = world.obstacles[i].state
        base = OBS_EGO_FIELDS + OBS_SLOT_FIELDS * slot
        obs[base : base + OBS_SLOT_FIELDS] = (s.x - ego.x, s.y - ego.y, s.speed, s.heading, 1.0)
    return obs


_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
}


@dataclass(frozen=True)
class MlpLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str


@dataclass(frozen=True)
class MlpPolicy:
    layers: tuple[MlpLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise PolicyFormatError("policy needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in _ACTIVATIONS:
                raise PolicyFormatError(f"unknown activation {layer.activation!r}")
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.weights.shape[0],):
                raise PolicyFormatError(f"layer {i} has inconsistent shapes")
            if i > 0 and layer.weights.shape[1] != self.layers[i - 1].weights.shape[0]:
                raise PolicyFormatError(
                    f"layer {i} input dim {layer.weights.shape[1]} does not chain"
                )
        last = self.layers[-1]
        if last.activation != "tanh":
            raise PolicyFormatError("final activation must be tanh")
        if last.weights.shape[0] != 2:
            raise PolicyFormatError("output dimension must be 2")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]


def policy_from_dict(data: dict) -> MlpPolicy:
    """Parse the weight-file structure: a list of layers, each with
    "shape" [out, in], flat row-major "weights", "bias", "activation"."""
    try:
        raw_layers = data["layers"]
    except (KeyError, TypeError):
        raise PolicyFormatError('weight file must contain a "layers" list')
    layers = []
    for i, raw in enumerate(raw_layers):
        try:
            out_dim, in_dim = (int(v) for v in raw["shape"])
            weights = np.asarray(raw["weights"], dtype=float).reshape(out_dim, in_dim)
            bias = np.asarray(raw["bias"], dtype=float)
            activation = str(raw["activation"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PolicyFormatError(f"layer {i}: {exc}") from exc
        layers.append(MlpLayer(weights=weights, bias=bias, activation=activation))
    return MlpPolicy(layers=tuple(layers))


def load_policy(path) -> MlpPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))


def zero_policy(input_dim: int) -> MlpPolicy:
    """Single all-zero tanh layer; always outputs (0, 0)."""
    return MlpPolicy(
        layers=(
            MlpLayer(weights=np.zeros((2, input_dim)), bias=np.zeros(2), activation="tanh"),
        )
    )


def mlp_forward(observation: np.ndarray, policy: MlpPolicy) -> ControlAction:
    """Affine + activation chain; the tanh outputs scale to the action
    ranges (accel * 5 m/s^2, steer * pi/6)."""
    h = np.asarray(observation, dtype=float)
    if h.shape != (policy.input_dim,):
        raise PolicyFormatError(
            f"observation length {h.shape} does not match policy input {policy.input_dim}"
        )
    for layer in policy.layers:
        h = _ACTIVATIONS[layer.activation](layer.weights @ h + layer.bias)
    return ControlAction(accel=float(h[0]) * ACCEL_SCALE, steer=float(h[1]) * STEER_SCALE)


class ScriptedLaneChange:
    """Proportional controller toward the target-lane centerline plus
    cruise control toward the target speed. Ignores obstacles by design;
    it plays the role of an unverified performance controller."""

    def __init__(
        self,
        target_lane: int,
        v_target: float = 20.0,
        limits: KinematicLimits = KinematicLimits(),
    ):
        self.target_lane = target_lane
        self.v_target = v_target
        self.limits = limits

    def act(self, world: WorldState) -> ControlAction:
        ego = world.ego
        dy = world.road.lane_center(self.target_lane) - ego.y
        steer = SCRIPTED_KY * dy + SCRIPTED_KTHETA * (0.0 - ego.heading)
        accel = SCRIPTED_KV * (self.v_target - ego.speed)
        return ControlAction(
            accel=clamp(accel, -self.limits.max_accel, self.limits.max_accel),
            steer=clamp(steer, -self.limits.max_steer, self.limits.max_steer),
        )


class DummyConstant:
    """Constant-acceleration controller used for the takeover study."""

    def __init__(self, accel_level: float, limits: KinematicLimits = KinematicLimits()):
        if abs(accel_level) > limits.max_accel:
            raise ValueError(f"|accel_level| must be <= {limits.max_accel}")
        self.accel_level = accel_level

    def act(self, world: WorldState) -> ControlAction:
        return ControlAction(accel=self.accel_level, steer=0.0)


class MlpController:
    """Wraps a loaded policy: observation -> forward pass -> action."""

    def __init__(self, policy: MlpPolicy, k: int = 5):
        expected = OBS_EGO_FIELDS + OBS_SLOT_FIELDS * k
        if policy.input_dim != expected:
            raise PolicyFormatError(
                f"policy input dim {policy.input_dim} does not match observation length {expected}"
            )
        self.policy = policy
        self.k = k

    def act(self, world: WorldState) -> ControlAction:
        return mlp_forward(build_observation(world, self.k), self.policy)


def make_controller(
    spec: str,
    target_lane: int,
    v_target: float = 20.0,
    limits: KinematicLimits = KinematicLimits(),
    k: int = 5,
):
    """Parse an AC selection string: scripted | dummy:<level> | mlp:<path>
    | mlp-zero (all-zero weights, for robustness checks)."""
    if spec == "scripted":
        return ScriptedLaneChange(target_lane, v_target=v_target, limits=limits)
    if spec == "mlp-zero":
        return MlpController(zero_policy(OBS_EGO_FIELDS + OBS_SLOT_FIELDS * k), k=k)
    if spec.startswith("dummy:"):
        return DummyConstant(float(spec.split(":", 1)[1]), limits=limits)
    if spec.startswith("mlp:"):
        return MlpController(load_policy(spec.split(":", 1)[1]), k=k)
    raise ValueError(f"unknown controller spec {spec!r}")
