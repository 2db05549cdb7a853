"""Circulant sliding-window attention networks for grouped sparse coding.

Unrolled proximal-gradient networks whose shrinkage step is modulated by a
learned, row-stochastic adjacency over a circular W x W pixel window. The
adjacency lives in O(Q W^2) band storage, every kernel has a hand-derived
exact backward rule, and the same machinery reconstructs complex images from
undersampled multi-coil k-space by inserting the observation Gram operator
into each layer.
"""

from .circatt import (BccbPattern, CircSparse, circ_att, circ_att_bwd,
                      circ_att_t, circ_dist_sim, circ_dist_sim_bwd,
                      circ_row_softmax, circ_row_softmax_bwd, circ_transpose)
from .core import (ConvFilterBank, Image, LatentCode, awgn, conv_analysis,
                   conv_synthesis, estimate_noise, psnr, spectrally_normalize,
                   ssim)
from .net import (GroupCdlParams, LayerParams, groupcdl_forward, init_ista,
                  load_checkpoint, param_tree, save_checkpoint, with_tree)
from .optim import (NumericError, adam_init, adam_step, backward, dict_learn,
                    grad_check, l1_ssim_loss, mse_loss, pgm_solve,
                    project_params)
from .shrinkage import (NlssTransforms, ThresholdParams, adaptive_threshold,
                        compute_adjacency, group_threshold_classical,
                        learned_group_threshold, soft_threshold,
                        update_adjacency)

__version__ = "0.1.0"

__all__ = [
    "BccbPattern", "CircSparse", "circ_att", "circ_att_bwd", "circ_att_t",
    "circ_dist_sim", "circ_dist_sim_bwd", "circ_row_softmax",
    "circ_row_softmax_bwd", "circ_transpose",
    "ConvFilterBank", "Image", "LatentCode", "awgn", "conv_analysis",
    "conv_synthesis", "estimate_noise", "psnr", "spectrally_normalize", "ssim",
    "GroupCdlParams", "LayerParams", "groupcdl_forward", "init_ista",
    "load_checkpoint", "param_tree", "save_checkpoint", "with_tree",
    "NumericError", "adam_init", "adam_step", "backward", "dict_learn",
    "grad_check", "l1_ssim_loss", "mse_loss", "pgm_solve", "project_params",
    "NlssTransforms", "ThresholdParams", "adaptive_threshold",
    "compute_adjacency", "group_threshold_classical",
    "learned_group_threshold", "soft_threshold", "update_adjacency",
    "__version__",
]
