"""Kinetic simulation of uniform shear flow for Maxwell molecules."""
from .kernel import (KernelSpec, collide_pair, compute_b0, compute_nu0, g1_value,
                     predicted_beta_leading, sample_scattering_direction)
from .moments import (MomentState, SelfSimilarSolution, closure_rhs, growth_rate_exact,
                      integrate_moments, rescaled_closure_rhs)
from .dsmc import (FrameState, HomogeneousConfig, ParticleEnsemble, collision_step,
                   dynamic_beta, init_maxwellian, measure_beta_from_energy, run_homogeneous,
                   shear_transport_step)
from .spatial import (InhomogeneousConfig, SpatialEnsemble, per_cell_collision_step,
                      run_inhomogeneous, spatial_mode_amplitudes, spatial_transport_step)
from .analysis import (first_order_flux_check, moment_boundedness_scan, tail_index,
                       weighted_profile_distance)
from .diagnostics import DiagnosticsRecord

__version__ = "0.1.0"
