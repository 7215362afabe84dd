"""2D isogeometric contact mechanics.

Plane-strain NURBS bodies with penalty-regularized contact. Three contact
discretizations (Gauss-point-to-segment, classical mortar, enriched mortar
with a contact-boundary level set), each usable in a one-sided full pass or
as two half passes, plus sub-element boundary quadrature for elements that
are only partially in contact.
"""

from .quadrature import GaussRule, gauss_rule, ElementPartition, rbq_partition
from .nurbs import KnotVector, curve_point, insert_knot, refine_uniform
from .mesh import Scene, Body, DofMap, load_scene, scene_to_text, build_dof_map
from .material import NeoHookean
from .kinematics import SurfacePoint, Projection, surface_point, closest_point_projection
from .mortar import MortarOperators, MORTAR_KINDS
from .xmortar import heaviside, sign_step, ExtendedState, assemble_extended_system
from .assembly import ContactConfig, ContactSystem
from .solver import SolverSettings, Model, SolveReport

__version__ = "0.1.0"
