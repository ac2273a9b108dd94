"""arcdepth: attend-remove-complete adaptation for monocular depth.

An attention net detects and removes hard regions in real images with
differentiable binary masks, an inpainter completes them with
synthetic-plausible content, a style translator closes low-level domain
gaps, and a depth predictor trains over mixed synthetic and translated-real
data through a staged coordinate-descent protocol.
"""

from .attention import (GumbelConfig, Mask, attend, gumbel_sigmoid, harden,
                        keep_rate, kl_sparsity_loss, sample_gumbel_noise)
from .backbone import (Architecture, FeaturePyramid, build_network, hash_params,
                       init_params, load_params, param_count, save_params)
from .data import (Domain, GeneratorConfig, SceneSample, generate_dataset,
                   generate_scene, load_dataset, save_dataset)
from .depth import DepthPrediction, depth_l1_loss, mixed_depth_loss, predict
from .evaluation import (MetricReport, compute_metrics, evaluate_pipeline,
                         masked_region_metrics, per_sample_error_reduction,
                         rho_sweep)
from .inpaint import (InpaintLossWeights, adversarial_loss_discriminator,
                      adversarial_loss_generator, compose, gate, gram,
                      inpaint_loss, perceptual_loss, random_training_mask,
                      rgb_reconstruction_loss, style_loss)
from .pipeline import ArcPipeline
from .trainer import (CheckpointBundle, DataBundle, TrainConfig,
                      make_initial_bundle, run_protocol)
from .translate import (TranslateLossWeights, TranslatorPair, cycle_loss,
                        identity_loss, translate_r2s, translator_loss)

__version__ = "0.1.0"
