"""shellhier: thin-shell elastic energies and their 2D limit functionals.

A numerical laboratory for the elastic behavior of thin shells around a
curved mid-surface: the 3D energy per unit thickness, the hierarchy of
two-dimensional limit models (Kirchhoff bending, von Karman, linear
bending, and the general N-th order regime functionals), infinitesimal
isometries and their matching into exact isometries, and h-sweep scaling
studies verifying the energy exponents.
"""

__version__ = "0.1.0"

from .errors import (
    BadDescriptor,
    ConstraintViolated,
    DegenerateChart,
    DegenerateGradientWarning,
    DegenerateImage,
    FitDegenerate,
    InconclusiveFit,
    InsufficientOrder,
    NegativeAlpha,
    NewtonDiverged,
    NotAPlate,
    NotAnIsometry,
    NotElliptic,
    OrderTooHigh,
    OutOfDomain,
    OutOfRegime,
    ShellhierError,
    SolverFailure,
    TubularViolation,
)
from .geometry import (
    FundamentalForms,
    SurfacePatch,
    assert_tubular,
    build_surface,
    ellipticity_check,
    frames,
    surface_integral,
)
from .material import (
    Material,
    distance_to_rotations,
    energy_density,
    fd_hessian_quadratic_form,
    hessian_quadratic_form,
    material_axiom_report,
    optimal_extension,
    reduced_quadratic_form,
    rotation_samples,
)
from .fields import (
    DisplacementField,
    DisplacementHierarchy,
    MidsurfaceDeformation,
    SkewField,
    StrainField,
    SurfaceField,
    combine,
    normal_field,
    rigid_motion_fields,
)
from .kinematics import (
    cell_metric,
    finite_strain_project,
    first_order_bending,
    isometry_order,
    metric_defect_norm,
    metric_expansion,
    plate_second_order_check,
    pullback_metric,
    pullback_shape,
    recover_rotation_field,
    solve_infinitesimal_isometries,
    strain_quotient,
    tangential_strain,
    v1_tolerance,
)
from .functionals import (
    ForceSpec,
    ThinShellAnsatz,
    a2_tangential,
    averaged_displacement,
    hierarchy_energy,
    kirchhoff_energy,
    linear_bending_energy,
    thin_shell_energy,
    total_energy,
    von_karman_energy,
)
from .experiments import (
    MatchingResult,
    ScalingReport,
    alpha_to_beta,
    build_recovery_sequence,
    eps_for_scaling,
    equipartition_report,
    matching_solve,
    matching_study,
    order_for_scaling,
    richardson_extrapolate,
    scaling_study,
)
