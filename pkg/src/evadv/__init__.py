"""Adversarial attacks on event-camera streams as 4D point sets."""

from .attacks import (AdamState, AttackAborted, AttackResult, CwAttack,
                      FgsmAttack, IfgsmAttack, MotionAwareAttack,
                      SampleLrState, adam_step, bisect_lambda, chamfer_loss,
                      chamfer_loss_grad, lr_adjust)
from .defenses import (MetricReport, SorDefense, SrsDefense, defended_eval,
                       make_defense, summarize_results)
from .diffusion import DiffusionWeights, diffuse, diffusion_weights, event_velocity
from .events import (Event, EventStream, LabeledSample, NormState,
                     SCENARIO_KINDS, SyntheticScenario, default_scenarios,
                     denormalize, generate_synthetic, normalize, resample_fixed)
from .io import load_events, save_events
from .losses import (cross_entropy, cross_entropy_grad, margin_logit_grad,
                     margin_logit_loss, total_loss)
from .metrics import (chamfer_distance, hausdorff_distance, l2_distance,
                      nearest_clean, success_rate)
from .neighbors import NeighborIndex, build_neighbor_index, knn_spatial, knn_temporal
from .victim import EventPointNet, load_victim, maxpool_tie_margin, save_victim

__version__ = "0.1.0"
