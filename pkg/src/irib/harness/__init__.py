"""Data synthesis, training stages, metrics, experiments and run artifacts."""

from .config import ExperimentConfig, OptimizerConfig, StepsConfig, load_config
from .data import PairSet, degrade_back_manifests, derive_seed, make_pairs, sample_step_pairs
from .experiments import (
    AblationRow,
    ComparisonReport,
    Pipeline,
    PlugAndPlayReport,
    ablate_lambda_blur,
    build_pipeline,
    corpora,
    evaluate,
    mean_condition_alignment,
    plug_and_play_eval,
    run_comparison,
    run_decomposed,
    run_direct,
    train_alt_restorer,
    tradeoff_svg,
    write_run,
)
from .io import load_png, save_png
from .metrics import (
    MetricsRow,
    blur_mse_metric,
    compute_row,
    fid_proxy,
    frechet_distance,
    metrics_csv,
    perceptual_proxy,
    psnr,
    read_metrics_csv,
    ssim,
    write_metrics_csv,
)
from .synth import gradient_energy, synth_dataset, synth_image
from .train import (
    TrainHistory,
    TrainingDiverged,
    feature_extractor,
    train_direct,
    train_prior,
    train_projector,
    train_restorer,
)
