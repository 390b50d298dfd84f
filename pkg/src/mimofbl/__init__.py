"""Finite-blocklength analysis of coherent MIMO block-fading channels.

Capacity, channel dispersion and the normal approximation for real
``n_r x n_t`` block fading with receiver channel knowledge, together with
the orthogonal-design machinery that minimizes dispersion under rank-1
fading.
"""

from .designs import (
    GaussianCaidCov,
    HurwitzRadonFamily,
    OccupancyDesign,
    assemble_design,
    build_hr_family,
    check_caid,
    check_hr,
    design_cov,
    full_rate_design,
    gaussian_caid_2x2,
    rho,
    truncation_search,
    var_frobsq,
    vstar_table,
    vstar_upper,
)
from .dispersion import (
    DispersionReport,
    EtaMoments,
    MonteCarloConfig,
    asymptotic_limits,
    capacity,
    capacity_awgn,
    dispersion_awgn,
    eta_moments,
    min_blocklength,
    normal_approx_logM,
    v1_of_x,
    v_iid,
    v_rank1,
)
from .fading import ChannelParams, FadingModel, PowerConvention, received_to_transmit, to_transmit
from .infodensity import (
    berry_esseen_ratio,
    empirical_conditional_moments,
    info_density,
    info_density_alt,
    simulate_output,
)
from .linalg import NumericalFailure, RngStream, qfunc, qfunc_inv, sample_haar_orthogonal

__version__ = "0.1.0"
