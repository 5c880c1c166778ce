"""Magnetic Katok examples on the two-sphere: geometry, flows, symplectic maps and orbit censuses."""

from .census import CensusResult, SectionSpec, census, poincare_return, shoot
from .dynamics import (
    CotangentState,
    Hamiltonian,
    KatokH,
    Kinetic,
    MagneticForm,
    OmegaS,
    Rs,
    WFamily,
    ZeroSectionError,
    ham_vector_field,
    isometry_lift,
    magnetic_round,
    omega_pairing,
    one_forms,
    vector_field,
)
from .ellipsoid import EllipsoidState, reeb_flow, reeb_periodic_orbits, return_scan
from .integrator import FlowResult, IntegrationError, integrate
from .katok import (
    GOLDEN,
    KatokParams,
    ParameterError,
    SequenceSpec,
    WParams,
    appendix_validate,
    closed_flow,
    convergence_report,
    equatorial_orbits,
    katok_metric,
    katok_system,
    level_identity_defect,
)
from .orbits import OrbitRecord, deduplicate, orbit_distance
from .psi import DomainError, PsiParams, psi_forward, psi_inverse
from .sphere import SpherePoint, TangentVector

__version__ = "0.1.0"
