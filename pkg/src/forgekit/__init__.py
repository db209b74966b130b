"""Blending-artifact forgery toolkit: synthesis, supervision targets, toy detector."""

from .errors import (ConfigError, ContractViolationError, DataError,
                     DegenerateGeometryError, DimensionError, DomainError,
                     EmptyInputError, ForgekitError, NumericError,
                     UndefinedMetricError)
from .imaging import (DeformParams, blend, convex_hull_mask, deform_mask,
                      load_image, load_landmarks, resize_bilinear, save_image,
                      save_landmarks)
from .labels import (boundary_mask, consistency_gt, gaussian_radius, heatmap_gt,
                     read_map_blob, read_map_png16, select_anchor,
                     vulnerable_points, write_map_blob, write_map_png16)
from .losses import (LossWeights, classification_loss, consistency_loss,
                     focal_heatmap_loss, total_loss)
from .metrics import (PerturbationSpec, ScoredSet, auc, average_precision,
                      average_recall, head_mask_from_landmarks, mask_ssim,
                      mean_f1, metrics_report, perturb, ssim, video_score)
from .model import (EfpnConfig, ModelConfig, ModelOutput, efpn_fuse, forward,
                    init_params, load_checkpoint, save_checkpoint)
from .nn import conv2d, transpose_conv2d
from .rng import generator_from_seed, split_seed
from .synthesis import (AugmentConfig, GroundTruthBundle, JitterParams,
                        SampleRecord, SynthesisConfig, augment, build_manifest,
                        bundle_from_record, make_bi_sample, make_real_sample,
                        make_sbi_sample, read_manifest, write_manifest)
from .train import TrainConfig, TrainResult, train_toy

__version__ = "0.1.0"
