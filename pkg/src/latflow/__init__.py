"""Multiscale diffusion on discrete lattices.

Discrete mesoscale transport networks (periodic Voronoi duals or structured
skewed lattices) are upscaled into an effective conductivity tensor through
a linear steady cell problem, which feeds a macroscale finite-element solver
for transient nonlinear diffusion; a fully resolved lattice solver on the
tiled geometry serves as the verification reference.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    DualNetwork,
    build_skewed_lattice,
    build_voronoi_dual,
    export_network,
    generate_periodic_nuclei,
    import_network,
    tile_full_domain,
    validate_network,
)
from .constitutive import (  # noqa: F401
    CapacitySource,
    HtcParams,
    HtcState,
    LinearPermeability,
    VanGenuchtenPermeability,
    randomize_lambda0,
)
from .rve import (  # noqa: F401
    EffectiveTensor,
    assemble,
    effective_tensor,
    fast_response,
    macro_flux,
    solve_eigen_gradient,
)
from .macro import DirichletBC, MacroMesh  # noqa: F401
from .config import load_config, parse_config  # noqa: F401
from .pipeline import run_scenario  # noqa: F401
