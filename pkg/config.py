import os
from dotenv import load_dotenv

load_dotenv()

# ── Project Paths ────────────────────────────────────────
PROJECT_ROOT: str = os.path.dirname(__file__)
DATA_DIR: str = os.getenv("FOA_DATA_DIR", os.path.join(PROJECT_ROOT, "data"))

# ── Logging ──────────────────────────────────────────────
LOG_LEVEL: str = os.getenv("FOA_LOG_LEVEL", "info")

# ── Stream generation ────────────────────────────────────
STREAM_WIDTH: int = int(os.getenv("FOA_STREAM_WIDTH", "64"))
STREAM_HEIGHT: int = int(os.getenv("FOA_STREAM_HEIGHT", "64"))
STREAM_SEED: int = int(os.getenv("FOA_STREAM_SEED", "1234"))
STREAM_LAPS: int = int(os.getenv("FOA_STREAM_LAPS", "31"))
LAP_FRAMES: int = int(os.getenv("FOA_LAP_FRAMES", "40"))
FRAMES_PER_FOLDER: int = 100

# ── Attention (gravitational FOA) ────────────────────────
ALPHA_B: float = float(os.getenv("FOA_ALPHA_B", "0.5"))
ALPHA_M: float = float(os.getenv("FOA_ALPHA_M", "1.0"))
DISSIPATION: float = float(os.getenv("FOA_DISSIPATION", "0.9"))
SACCADE_THRESHOLD: float = float(os.getenv("FOA_SACCADE_THRESHOLD", "4.0"))
INTEGRATION_STEP: float = float(os.getenv("FOA_INTEGRATION_STEP", "1.0"))
INHIBITION_STRENGTH: float = float(os.getenv("FOA_INHIBITION_STRENGTH", "0.0"))
INHIBITION_RADIUS: float = float(os.getenv("FOA_INHIBITION_RADIUS", "3.0"))
INHIBITION_DECAY: float = float(os.getenv("FOA_INHIBITION_DECAY", "0.9"))
SINGULARITY_FLOOR: float = 0.25   # px², quarter pixel
INITIAL_VX: float = float(os.getenv("FOA_INITIAL_VX", "0.0"))
INITIAL_VY: float = float(os.getenv("FOA_INITIAL_VY", "0.0"))

# ── Moving-region segmentation ───────────────────────────
MOTION_THRESHOLD: float = float(os.getenv("FOA_MOTION_THRESHOLD", "0.1"))
EIGHT_CONNECTED: bool = os.getenv("FOA_EIGHT_CONNECTED", "false").lower() == "true"

# ── Stochastic attention graph ───────────────────────────
EDGES_PER_TYPE: int = int(os.getenv("FOA_EDGES_PER_TYPE", "1000"))
SPREAD_FACTOR: int = int(os.getenv("FOA_SPREAD_FACTOR", "3"))
MAX_ROUNDS_PER_NODE: int = 20     # max_rounds = 20 · o
GRAPH_MODE: str = os.getenv("FOA_GRAPH_MODE", "stochastic")

# ── Feature extractor (FCN-ND family) ────────────────────
EXTRACTOR_KIND: str = os.getenv("FOA_EXTRACTOR_KIND", "fcn")
KERNEL_SIZE: int = int(os.getenv("FOA_KERNEL_SIZE", "5"))
HIDDEN_CHANNELS: str = os.getenv("FOA_HIDDEN_CHANNELS", "16,32,32,32,32")
FEATURE_DIM: int = int(os.getenv("FOA_FEATURE_DIM", "32"))
ACTIVATION: str = os.getenv("FOA_ACTIVATION", "tanh")
NORMALIZE_FEATURES: bool = os.getenv("FOA_NORMALIZE_FEATURES", "true").lower() == "true"
INIT_SEED: int = int(os.getenv("FOA_INIT_SEED", "0"))

# ── Learning criterion ───────────────────────────────────
LEARNING_RATE: float = float(os.getenv("FOA_LEARNING_RATE", "1e-3"))
LAMBDA_T: float = float(os.getenv("FOA_LAMBDA_T", "1.0"))
LAMBDA_S: float = float(os.getenv("FOA_LAMBDA_S", "1e-2"))
LAMBDA_C: float = float(os.getenv("FOA_LAMBDA_C", "1e-2"))
CONTRASTIVE_EPS: float = float(os.getenv("FOA_CONTRASTIVE_EPS", "0.1"))

# ── Open-set classifier ──────────────────────────────────
OPENSET_THRESHOLD: float = float(os.getenv("FOA_OPENSET_THRESHOLD", "0.5"))
DISTANCE_KIND: str = os.getenv("FOA_DISTANCE_KIND", "cosine")
TUNE_XI: bool = os.getenv("FOA_TUNE_XI", "true").lower() == "true"
REFRESH_EVERY: int = int(os.getenv("FOA_REFRESH_EVERY", "1"))
XI_GRID_START: float = 0.01
XI_GRID_STOP: float = 2.0
XI_GRID_STEP: float = 0.01

# ── Lap protocol ─────────────────────────────────────────
LEARN_LAPS: int = int(os.getenv("FOA_LEARN_LAPS", "25"))
SUPERVISE_THROUGH_LAP: int = int(os.getenv("FOA_SUPERVISE_THROUGH_LAP", "30"))
EVAL_LAP: int = int(os.getenv("FOA_EVAL_LAP", "31"))
SUPERVISIONS_PER_OBJECT: int = int(os.getenv("FOA_SUPERVISIONS_PER_OBJECT", "3"))
MIN_SUPERVISION_SPACING: int = int(os.getenv("FOA_MIN_SUPERVISION_SPACING", "100"))
RUN_SEEDS: str = os.getenv("FOA_RUN_SEEDS", "0")

# ── Benchmark ────────────────────────────────────────────
BENCH_REPEATS: int = int(os.getenv("FOA_BENCH_REPEATS", "3"))
BENCH_PAIR_CAP: int = int(os.getenv("FOA_BENCH_PAIR_CAP", "50000000"))
