"""Video anomaly detection from appearance-motion correspondence.

A single frame goes through a shared encoder into two decoders: one
reconstructs the frame, the other (with U-Net skips) predicts the optical flow
to the next frame. Frames are scored by the flow and reconstruction errors in
the worst 16x16 patch.
"""

from .data import EventInterval, VideoDataset, batch_iterator, load_dataset, preprocess_frame, read_flow, write_flow
from .evaluation import detect_events, match_events, pr_ap, roc_auc
from .losses import LossWeights, generator_loss, discriminator_loss
from .model import GeneratorConfig, build_discriminator, build_generator, load_checkpoint, save_checkpoint
from .scoring import ScoreWeights, fit_score_weights, frame_score, max_patch, score_dataset
from .synthetic import SynthSpec, generate_synthetic
from .training import TrainConfig, train

__version__ = "0.1.0"
