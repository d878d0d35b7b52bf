"""Self-supervised glyph attention for sequence recognition, desk scale.

A complete, dependency-light implementation: float64 tensors with a
reverse-mode tape, a synthetic word-image generator with exact glyph
masks, an attention encoder/decoder, a k-means-supervised mask head, a
glyph pseudo-label builder, a glyph attention network, and a gated
character fusion module, plus training/evaluation loops and a CLI.
"""

from .alignment import (alignment_loss, correlation, interpolate_alpha,
                        saliency, squash, theta_metric)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, parse_config
from .counters import COUNTERS
from .data import (CHARSET, GenConfig, Sample, generate, read_dataset,
                   read_image, render_sample, write_dataset, write_image)
from .decoder import (VOCAB, AttentionTrace, EncoderOut, attention_step,
                      decode_sequence, decode_step, encode, greedy_decode,
                      recognition_loss)
from .errors import (ConfigError, ContractError, DegenerateImage, FormatError,
                     NumericError, ParseError, ShapeError, SigaError)
from .glan import (dice_loss, glan_loss, glyph_head_forward,
                   pool_glyph_features, projection_param_count, union_ce_loss)
from .gpc import GlyphPseudoLabel, build_glyph_pseudo_label, detach_targets
from .model import gate_fuse, init_params, total_loss
from .tensor import (EPS, Tensor, backward, forward_op, grad_check, no_grad,
                     rng, tape)
from .textseg import kmeans_mask, pyramid_forward, seg_loss
from .train import Adam, EvalReport, TrainResult, evaluate, train

__version__ = "0.1.0"
