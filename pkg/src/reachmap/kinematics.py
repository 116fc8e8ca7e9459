"""Denavit-Hartenberg forward kinematics for serial revolute arms.

Convention is classic (distal) DH: each joint contributes
``Rz(theta) @ Tz(d) @ Tx(a) @ Rx(alpha)`` where ``theta`` is the joint
variable plus the row's fixed ``theta_offset``.  Transforms are plain
``(4, 4)`` float64 numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import yaml

from .errors import ConfigParseError, InvalidArgumentError, ValidationError

RIGID_TOL = 1e-9
LIMIT_SPAN_EPS = 1e-9

SUPPORTED_CONVENTIONS = ("dh-classic",)
SUPPORTED_JOINT_TYPES = ("revolute",)


@dataclass(frozen=True)
class DHRow:
    theta_offset: float
    d: float
    a: float
    alpha: float

    def __post_init__(self):
        for name in ("theta_offset", "d", "a", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"DHRow.{name} must be finite")


@dataclass(frozen=True)
class JointLimits:
    min: float
    max: float

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise InvalidArgumentError("joint limits must be finite")
        if self.min > self.max:
            raise InvalidArgumentError(f"limit min {self.min} > max {self.max}")
        if self.max - self.min > 2 * math.pi + LIMIT_SPAN_EPS:
            raise InvalidArgumentError(f"limit span {self.max - self.min} exceeds 2*pi")

    def contains(self, angle: float) -> bool:
        return self.min <= angle <= self.max


@dataclass(frozen=True)
class Joint:
    dh: DHRow
    limits: JointLimits


def rigidity_error(T) -> tuple[float, float]:
    """Return ``(max|R^T R - I|, |det R - 1|)`` for the rotation block of ``T``."""
    R = np.asarray(T, dtype=float)[..., :3, :3]
    gram = np.swapaxes(R, -1, -2) @ R
    ortho = np.abs(gram - np.eye(3)).max(axis=(-1, -2))
    det = np.abs(np.linalg.det(R) - 1.0)
    return ortho, det


def is_rigid(T, tol: float = RIGID_TOL) -> bool:
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        return False
    ortho, det = rigidity_error(T)
    last_row_ok = np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0])
    return bool(ortho < tol and det < tol and last_row_ok)


@dataclass(frozen=True, eq=False)
class RobotModel:
    """A named serial chain plus the camera-to-base extrinsic calibration."""

    name: str
    joints: tuple[Joint, ...]
    base_to_camera: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValidationError("name", "must be a non-empty string")
        if len(self.joints) < 1:
            raise ValidationError("joints", "at least one joint is required")
        E = np.array(self.base_to_camera, dtype=float)
        if not is_rigid(E):
            raise ValidationError("extrinsics", "camera-to-base transform is not rigid")
        E.setflags(write=False)
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "base_to_camera", E)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def dh_table(self) -> np.ndarray:
        """``(n, 4)`` array of ``theta_offset, d, a, alpha`` per joint."""
        return np.array([[j.dh.theta_offset, j.dh.d, j.dh.a, j.dh.alpha] for j in self.joints])

    @property
    def limits(self) -> np.ndarray:
        """``(n, 2)`` array of ``min, max`` per joint."""
        return np.array([[j.limits.min, j.limits.max] for j in self.joints])

    def subchain(self, start: int, stop: int | None = None) -> "RobotModel":
        return RobotModel(self.name, self.joints[start:stop], self.base_to_camera)

    def __eq__(self, other):
        if not isinstance(other, RobotModel):
            return NotImplemented
        return (
            self.name == other.name
            and self.joints == other.joints
            and np.array_equal(self.base_to_camera, other.base_to_camera)
        )

    __hash__ = None


def _dh_matrices(theta, d, a, alpha) -> np.ndarray:
    # Broadcasts over leading dimensions; returns (..., 4, 4).
    theta, d, a, alpha = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(d, float), np.asarray(a, float), np.asarray(alpha, float)
    )
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    T = np.zeros(theta.shape + (4, 4))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st * ca
    T[..., 0, 2] = st * sa
    T[..., 0, 3] = a * ct
    T[..., 1, 0] = st
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -ct * sa
    T[..., 1, 3] = a * st
    T[..., 2, 1] = sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = d
    T[..., 3, 3] = 1.0
    return T


def dh_transform(theta: float, row: DHRow) -> np.ndarray:
    """Homogeneous transform of one joint at joint variable ``theta``."""
    if not math.isfinite(theta):
        raise InvalidArgumentError("theta must be finite")
    return _dh_matrices(theta + row.theta_offset, row.d, row.a, row.alpha)


def _check_config(robot: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.shape[0] != robot.dof:
        raise InvalidArgumentError(f"expected {robot.dof} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentError("joint angles must be finite")
    return q


def forward_kinematics(robot: RobotModel, q: Sequence[float]) -> np.ndarray:
    """Base-to-end-effector transform ``T1 @ T2 @ ... @ Tn``."""
    q = _check_config(robot, q)
    T = np.eye(4)
    for angle, joint in zip(q, robot.joints):
        T = T @ dh_transform(float(angle), joint.dh)
    return T


def forward_kinematics_batch(robot: RobotModel, Q) -> np.ndarray:
    """Vectorised forward kinematics over an ``(m, n)`` array of configs.

    Returns an ``(m, 4, 4)`` stack, multiplied in the same left-to-right
    order as :func:`forward_kinematics`.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != robot.dof:
        raise InvalidArgumentError(f"expected (m, {robot.dof}) configs, got shape {Q.shape}")
    table = robot.dh_table
    T = np.broadcast_to(np.eye(4), (Q.shape[0], 4, 4)).copy()
    for i in range(robot.dof):
        off, d, a, alpha = table[i]
        T = T @ _dh_matrices(Q[:, i] + off, d, a, alpha)
    return T


def end_effector_position(robot: RobotModel, q: Sequence[float]) -> np.ndarray:
    """Position of the end-effector frame origin in the base frame."""
    return forward_kinematics(robot, q)[:3, 3].copy()


def end_effector_positions(robot: RobotModel, Q) -> np.ndarray:
    return forward_kinematics_batch(robot, Q)[:, :3, 3]


@dataclass(frozen=True)
class LimitViolation:
    joint_indices: tuple[int, ...]

    def __bool__(self):
        return False


def validate_joint_config(robot: RobotModel, q: Sequence[float]) -> bool | LimitViolation:
    """``True`` if every angle lies within its (inclusive) limits.

    Otherwise returns a falsy :class:`LimitViolation` listing the offending
    joint indices.
    """
    q = _check_config(robot, q)
    bad = tuple(i for i, (angle, j) in enumerate(zip(q, robot.joints)) if not j.limits.contains(angle))
    return True if not bad else LimitViolation(bad)


# -- config loading -----------------------------------------------------------

_TOP_KEYS = {"name", "dof", "convention", "joints", "extrinsics"}
_JOINT_KEYS = {"type", "theta_offset_rad", "d_m", "a_m", "alpha_rad", "limit_min_rad", "limit_max_rad"}
_JOINT_REQUIRED = _JOINT_KEYS - {"type"}


def _number(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(field, "must be finite")
    return value


def parse_robot_config(config_text: str) -> dict:
    """Parse YAML (or JSON, which YAML accepts) into a plain mapping."""
    try:
        doc = yaml.safe_load(config_text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else None
        col = mark.column + 1 if mark is not None else None
        raise ConfigParseError(f"invalid robot config: {exc.problem}", line, col) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"invalid robot config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigParseError("robot config must be a mapping at the top level")
    return doc


def robot_model_from_dict(doc: dict) -> RobotModel:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown field")
    for key in ("name", "dof", "joints", "extrinsics"):
        if key not in doc:
            raise ValidationError(key, "missing required field")

    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("name", "must be a non-empty string")
    convention = doc.get("convention", "dh-classic")
    if convention not in SUPPORTED_CONVENTIONS:
        raise ValidationError("convention", f"unsupported DH convention {convention!r}; only 'dh-classic'")
    dof = doc["dof"]
    if isinstance(dof, bool) or not isinstance(dof, int) or dof < 1:
        raise ValidationError("dof", "must be a positive integer")
    raw_joints = doc["joints"]
    if not isinstance(raw_joints, list):
        raise ValidationError("joints", "must be a list")
    if len(raw_joints) != dof:
        raise ValidationError("joints", f"declares dof={dof} but lists {len(raw_joints)} joints")

    joints = []
    for i, raw in enumerate(raw_joints):
        prefix = f"joints[{i}]"
        if not isinstance(raw, dict):
            raise ValidationError(prefix, "must be a mapping")
        unknown = set(raw) - _JOINT_KEYS
        if unknown:
            raise ValidationError(f"{prefix}.{sorted(unknown)[0]}", "unknown field")
        missing = _JOINT_REQUIRED - set(raw)
        if missing:
            raise ValidationError(f"{prefix}.{sorted(missing)[0]}", "missing required field")
        jtype = raw.get("type", "revolute")
        if jtype not in SUPPORTED_JOINT_TYPES:
            raise ValidationError(f"{prefix}.type", f"unsupported joint type {jtype!r}; only revolute")
        vals = {k: _number(raw[k], f"{prefix}.{k}") for k in _JOINT_REQUIRED}
        try:
            limits = JointLimits(vals["limit_min_rad"], vals["limit_max_rad"])
        except InvalidArgumentError as exc:
            raise ValidationError(f"{prefix}.limits", str(exc)) from None
        row = DHRow(vals["theta_offset_rad"], vals["d_m"], vals["a_m"], vals["alpha_rad"])
        joints.append(Joint(row, limits))

    ext = doc["extrinsics"]
    if not isinstance(ext, list) or len(ext) != 16:
        raise ValidationError("extrinsics", "must be a list of 16 numbers (row-major 4x4)")
    E = np.array([_number(v, f"extrinsics[{k}]") for k, v in enumerate(ext)]).reshape(4, 4)
    return RobotModel(name, tuple(joints), E)


def load_robot_model(config_text: str) -> RobotModel:
    """Build a validated :class:`RobotModel` from YAML or JSON text."""
    return robot_model_from_dict(parse_robot_config(config_text))


def robot_model_to_dict(robot: RobotModel) -> dict:
    return {
        "name": robot.name,
        "dof": robot.dof,
        "convention": "dh-classic",
        "joints": [
            {
                "type": "revolute",
                "theta_offset_rad": j.dh.theta_offset,
                "d_m": j.dh.d,
                "a_m": j.dh.a,
                "alpha_rad": j.dh.alpha,
                "limit_min_rad": j.limits.min,
                "limit_max_rad": j.limits.max,
            }
            for j in robot.joints
        ],
        "extrinsics": [float(v) for v in robot.base_to_camera.ravel()],
    }


def dump_robot_model(robot: RobotModel) -> str:
    return json.dumps(robot_model_to_dict(robot), indent=2)
