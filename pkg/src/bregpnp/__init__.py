"""Mirror-descent and plug-and-play restoration for photon-limited imaging.

The package pairs classical proximal-gradient and denoiser-driven solvers
with their Bregman-geometry generalizations, specialized for Poisson
deblurring where the burg entropy gives every step an elementwise closed
form.
"""

from .denoisers import (
    IdentityDenoiser,
    LinearSmoother,
    MedianFilter,
    ScaledContraction,
    lipschitz_estimate,
)
from .errors import (
    BregpnpError,
    DimensionError,
    DomainError,
    DualDomainError,
    SafeguardExhaustedError,
    ShapeMismatchError,
    StepError,
    UnsupportedPairError,
)
from .fidelity import (
    GaussianFidelity,
    PoissonFidelity,
    operator_sq_norm,
    relative_smoothness,
)
from .geometry import (
    NONNEG,
    ZERO,
    ReferenceFunction,
    Regularizer,
    bpo_burg,
    bpo_euclidean,
    bregman_simplex_projection,
    burg_entropy,
    l1,
    quadratic,
    shannon_entropy,
)
from .images import (
    ConvolutionOperator,
    DenseOperator,
    IdentityOperator,
    Image,
    Kernel,
    LinearOperator,
    conv2d_adjoint,
    conv2d_forward,
    gaussian_kernel,
    load_image,
    make_kernel,
    psnr,
    save_image,
    uniform_kernel,
)
from .phantoms import get_phantom, piecewise_constant, smooth_bump
from .solvers import (
    ALGORITHMS,
    RunReport,
    SolverConfig,
    TheoremCertificate,
    bpgm,
    burg_backtrack,
    default_x0,
    mirror_step,
    pgm,
    pnp_bpgm,
    pnp_pgm,
    red_bsd,
    red_objective,
    red_sd,
    solve,
    theorem_gate,
)

__version__ = "0.1.0"
