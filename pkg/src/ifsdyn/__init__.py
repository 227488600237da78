"""Iterated function systems: shadowing, expansiveness and topological stability."""

from .errors import (ConstructionFailure, IfsError, PropertyFailure, ResourceError,
                     ShadowingFailure, UniquenessViolation, UsageError)
from .phase import Grid, GridSpec, PhaseSpace, box, circle, distance, grid_points, torus
from .ifs import (Chain, IfsSpec, ParamNet, ParamSeq, affine_1d, affine_torus, apply,
                  chain_defect, check_transitive, closed_form_example2, doubling_circle, iterate,
                  make_chain, make_delta_chain, random_sequence, rotation_circle)
from .hyperspace import (MetricEstimate, c0_distance, equicontinuity_modulus, hausdorff_finite,
                         ifs_hausdorff)
from .shadowing import (ShadowQuery, ShadowResult, brute_force_shadow, contraction_shadow,
                        example2_concordant_shadow, linear_hyperbolic_shadow, pullback_shadow,
                        shadow, shadow_horizon_stability)
from .expansive import (ExpansivityVerdict, estimate_expansivity, separation_horizon,
                        unique_shadow, validate_counterexample)
from .stability import (CompatiblePair, ConjugacySample, StabilityReport, build_conjugacy,
                        build_perturbed_ifs, check_compatibility,
                        stability_to_shadowing_experiment, verify_stability)
from .gallery import GalleryEntry, gallery_list, run_gallery_checks

__version__ = "0.1.0"
