"""Multipath-exploiting microwave imaging by inverse source reconstruction."""

__version__ = "0.1.0"

from .emmath import (  # noqa: E402
    WaveContext,
    dipole_field,
    legendre,
    spherical_hankel2,
    spherical_quadrature,
    translation_operator,
    translation_order,
)
from .scene import (  # noqa: E402
    DipoleSource,
    ImageSource,
    PecPlane,
    Scene,
    enumerate_image_sources,
    mirror_moment,
    mirror_point,
)
from .forward import MeasurementSet, SamplePlane, add_noise, simulate_measurements  # noqa: E402
from .isr import (  # noqa: E402
    InverseSourceReconstruction,
    PlaneWaveSpectrum,
    SolverConfig,
    SourceBox,
    make_boxes,
    solve_isr,
)
from .imaging import (  # noqa: E402
    MultipathImager,
    VoxelGrid,
    VoxelImage,
    backpropagate,
    combine,
    make_filter,
)
from .bpa import BackProjection, bpa_image, rt_bpa_image  # noqa: E402
from .analysis import artifact_floor, find_peaks, ghost_check, psf_width  # noqa: E402
