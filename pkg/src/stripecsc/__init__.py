"""Convolutional sparse coding with local (stripe) sparsity measures."""
from .apps import (SeparationConfig, SeparationResult, inpaint, inpainting_thresholds,
                   separate_cartoon_texture, tv_denoise, update_dictionary)
from .classic import FistaConfig, omp_patch, omp_patches, patch_average, solve_l1
from .core import (LocalDictionary, StripeDictionary, analyze, build_dct_dictionary,
                   build_stripe_dictionary, extract_patches, extract_stripes, l1inf_norm,
                   scatter_patches, scatter_stripes, synthesize)
from .diagnostics import (atom_usage_histogram, diff_sparsity_maps, local_contrast_normalize,
                          psnr, sparsity_map, top1_share)
from .exceptions import (ConstraintInfeasible, ConvergenceWarning, FormatError,
                         InvalidArgumentError, NumericalFailure)
from .l1inf import AdmmConfig, solve_l1inf
from .l2inf import (ConstraintSpec, PpxaConfig, prox_patch_constraint, reconstruct_denoise,
                    solve_l2inf)
from .prox import dist_l1_ball, project_l1_ball, shrink
from .trace import IterRecord

__version__ = "0.1.0"
