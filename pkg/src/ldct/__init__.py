"""Low-dose CT simulation and weighted-TV reconstruction toolkit."""

from .operators import (
    Geometry,
    back_project,
    desk_scale_geometry,
    div_adjoint,
    forward_project,
    grad,
    op_norm_power,
    projector_norm,
    system_matrix,
)
from .physics import (
    PhysicsParams,
    kl_gradient,
    kl_value,
    lipschitz_bound,
    simulate_lowdose,
)
from .solvers import (
    SolveReport,
    SolverState,
    StepSizes,
    fbp_reconstruct,
    pd3o_run,
    pdhg_run,
    prox_box_dual,
    prox_nonneg,
)
from .parammap import (
    FormatError,
    edge_adaptive_map,
    grid_search_lambda,
    read_image,
    read_pmap,
    read_sinogram,
    scalar_map,
    write_image,
    write_pmap,
    write_sinogram,
)
from .metrics import MetricReport, evaluate, psnr, ssim
from .testdata import EllipseSpec, random_ellipses, render_ellipses, shepp_logan

__version__ = "0.1.0"

__all__ = [
    "Geometry",
    "back_project",
    "desk_scale_geometry",
    "div_adjoint",
    "forward_project",
    "grad",
    "op_norm_power",
    "projector_norm",
    "system_matrix",
    "PhysicsParams",
    "kl_gradient",
    "kl_value",
    "lipschitz_bound",
    "simulate_lowdose",
    "SolveReport",
    "SolverState",
    "StepSizes",
    "fbp_reconstruct",
    "pd3o_run",
    "pdhg_run",
    "prox_box_dual",
    "prox_nonneg",
    "FormatError",
    "edge_adaptive_map",
    "grid_search_lambda",
    "read_image",
    "read_pmap",
    "read_sinogram",
    "scalar_map",
    "write_image",
    "write_pmap",
    "write_sinogram",
    "MetricReport",
    "evaluate",
    "psnr",
    "ssim",
    "EllipseSpec",
    "random_ellipses",
    "render_ellipses",
    "shepp_logan",
    "__version__",
]
