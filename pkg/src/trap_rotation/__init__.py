"""Design and verification of fast, excitation-free rotations of a harmonic trap."""
from .bangbang import BangBangDesign, analytic_b, as_protocol, design_bangbang
from .compensation import (BSchedule, CompensationPlan, scheduled_compensation, smoothstep_schedule,
                           trivial_compensation)
from .core import (AngleProtocol, ConstantRateProtocol, DomainError, IntegrationError, PolynomialProtocol,
                   SampledProtocol, TrapConfig, check_protocol, effective_w2, integrate_ode, protocol_from_dict,
                   to_dimensionless, to_seconds)
from .ermakov import (BTrajectory, CollapseError, excitation_energy, excitation_report, final_defect,
                      integrate_ermakov, solve_ermakov)
from .inverse import (PolyDesign, critical_time, minimal_time_scan, optimize_rotation, optimize_squeezing,
                      poly_protocol)
from .optcontrol import OCSolution, ShootingError, control_law, export_control, pmp_rhs, shoot
from .oracle import Grid, WaveState, build_mode, coherent_evolution_check, measure, propagate
from .simplex import simplex_minimize

__version__ = "0.1.0"
