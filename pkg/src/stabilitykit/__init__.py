"""stabilitykit: no-reference video stability assessment.

Classical baselines (ITF, frequency-domain Stability Score), a three-branch
feature model with a trainable regression head, the SROCC/PLCC/KRCC/RMSE
evaluation protocol, subjective-study MOS tooling, and a synthetic shaky
video generator that makes all of it verifiable end to end.
"""

from .classic import ItfResult, StabilityResult, freq_energy_ratio, itf, psnr, stability_score
from .errors import StabilityKitError
from .evaluation import MetricReport, evaluate, krcc, logistic_fit, rmse, srocc
from .features import FeatureBundle, FeatureDims, FusedFeature, clip_features, fuse
from .media import Clip, FrameSequence, load_frame_dir, load_y4m, resize_bilinear, sample_clip, save_y4m, to_luma
from .model import ModelParams, TrainConfig, load_checkpoint, mlp_forward, predict_video, save_checkpoint, train
from .mos import MosResult, RatingsTable, compute_mos, golden_check, reject_outlier_subjects, repeated_check, split_half
from .motion import (
    FlowField,
    MotionParams,
    RansacParams,
    Trajectory,
    accumulate_trajectory,
    detect_corners,
    estimate_motion,
    grid_flow,
    track_lk,
    video_trajectory,
)
from .synth import LabeledVideo, ShakeComponent, ShakeSpec, gen_dataset, gen_trajectory, render_shaky

__version__ = "0.1.0"
