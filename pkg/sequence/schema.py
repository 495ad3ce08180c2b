"""
File format definitions shared by the readers, the writers and the synthetic
scene generator. docs/FORMATS.md documents the same layout for humans.

TUM list files:   "timestamp filename", '#' comments
TUM trajectory:   "timestamp tx ty tz qx qy qz qw", '#' comments
Depth PNG:        16-bit single channel, DEPTH_SCALE units per meter, 0 = invalid
Detections:       JSON Lines, one object per detection (DETECTION_FIELDS)
Track log:        JSON Lines, one object per live track per frame (TRACK_LOG_FIELDS)
Ground truth:     JSON Lines, one object per visible object per frame (GROUND_TRUTH_FIELDS)
"""

DEPTH_SCALE = 5000.0

# Sequence layout
DEPTH_LIST = "depth.txt"
RGB_LIST = "rgb.txt"
GROUNDTRUTH = "groundtruth.txt"
DETECTIONS = "detections.jsonl"
INTRINSICS = "intrinsics.json"
GROUND_TRUTH_SIDECAR = "ground_truth.jsonl"
DEPTH_DIR = "depth"
RGB_DIR = "rgb"

# Run output layout
MDI_DIR = "mdi"
MO_MDI_DIR = "mo_mdi"
MDI_LIST = "mdi.txt"
MO_MDI_LIST = "mo_mdi.txt"
TRACK_LOG = "tracks.jsonl"
TRAJECTORY = "trajectory.txt"
LATENCY_CSV = "latency.csv"

DETECTION_FIELDS = ("timestamp", "class_id", "score", "x_min", "y_min", "x_max", "y_max", "rle")

TRACK_LOG_FIELDS = (
    "timestamp", "id", "class_id", "position", "velocity", "label", "speed", "deformation",
)

GROUND_TRUTH_FIELDS = (
    "timestamp", "object", "class_id", "position", "velocity", "camera_position",
    "speed", "label",
)

TRAJECTORY_HEADER = "# timestamp tx ty tz qx qy qz qw"


def image_list_header(kind: str) -> str:
    return f"# {kind} images\n# timestamp filename"


def frame_filename(timestamp: float) -> str:
    """Image file name for a frame; six decimals as in the TUM sequences."""
    return f"{timestamp:.6f}.png"
