"""Space-physical reachability maps from robot kinematics and RGB-D images."""

from .errors import (
    ConfigParseError,
    ContractError,
    GridCorruptionError,
    GridFormatError,
    InvalidArgumentError,
    ReachMapError,
    ResourceLimitError,
    ValidationError,
)
from .kinematics import (
    DHRow,
    Joint,
    JointLimits,
    RobotModel,
    dh_transform,
    end_effector_position,
    forward_kinematics,
    load_robot_model,
    validate_joint_config,
)
from .pointcloud import CameraIntrinsics, DepthImage, PointCloud, filter_reachable, transform_cloud, unproject_depth
from .reachqa import ObjectAnnotation, QAPair, generate_qa_pairs, object_reachability, score_responses
from .spmap import PixelClass, RenderStyle, SPMap, build_spmap, classify_pixels, render_spmap
from .workspace import (
    GridSpec,
    SamplingSpec,
    VoxelGrid,
    build_workspace_grid,
    contains,
    load_grid,
    sample_joint_space,
    save_grid,
)

__version__ = "0.1.0"
