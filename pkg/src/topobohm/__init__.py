"""Bohmian dynamics on multiply-connected configuration spaces.

Wave functions live on the universal covering space and obey a periodicity
condition tied to a topological factor (a character, a unitary matrix
representation, or a holonomy-twisted table of the deck group).  The
package provides the deck-group algebra, factor classification, spectrally
accurate twisted propagation, Bohmian trajectory transport with statistical
equivariance checks, and a spontaneous-collapse process that respects the
topological sector.
"""

__version__ = "0.1.0"

from .covering import (
    CoveringSpace,
    FreePoint,
    FreeWord,
    Permutation,
    RingPoint,
    SemidirectElement,
    Winding,
    deck_apply,
    deck_compose,
    is_projectable_field,
    project_density,
)
from .factors import (
    Character,
    FiniteGroup,
    MatrixRep,
    TwistedRepTable,
    character_table,
    check_commutes,
    check_covariant_potential,
    classify_dynamics,
    conjugacy_residual,
    decompose_by_character,
    enumerate_characters,
    make_character,
    nfermion_factor,
    verify_twisted_law,
)
from .propagation import (
    Potential,
    WaveGrid,
    crank_nicolson_evolve,
    evolve,
    evolve_vector_potential,
    gauge_map,
    gauge_unmap,
    make_eigenstate,
    make_gaussian_state,
    make_plain_state,
    make_two_particle_state,
    pair_eigenstate,
    spectrum,
    state_from_dict,
    state_to_dict,
    step_splitstep,
    step_two_particle,
    step_vector_potential,
    twist_embed,
)
from .trajectories import (
    Trajectory,
    integrate_trajectory,
    lift_trajectory,
    transport,
    velocity_field,
)
from .ensembles import (
    EnsembleReport,
    sample_density,
    tv_distance,
    verify_equivariance,
)
from .collapse import (
    CollapseEvent,
    apply_collapse,
    collapse_rate,
    simulate_grw,
    total_rate,
)
from .errors import (
    ConfigError,
    IncompatibleFactorError,
    NonUnimodularFactorError,
    PhysicsError,
    ToleranceError,
    TopobohmError,
)
