"""Shared-memory kernels for the GEMPIC H_p1 particle substep."""
from .domain import FieldDofs, Grid3, ParticleGroup, locate, tensor_index_1d, wrap_periodic
from .execution import ExecConfig, parallel_for_particles, parallel_for_ranges
from .hp1 import Hp1Operator, StepTooLargeError, hp1_push_particle, integrated_basis_line
from .init_state import InitSpec, init
from .scatter import ScatterAccumulator, Strategy, make_accumulator
from .spline_basis import PPSplineBasis, eval_basis, eval_primitive, pp_coefficients

__version__ = "0.1.0"
