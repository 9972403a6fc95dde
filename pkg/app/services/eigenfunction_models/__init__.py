"""
Microlocal eigenfunction expansions at radial points, evaluated on collar grids.
"""

from app.services.eigenfunction_models.center import (
    CenterExpansion,
    apply_q,
    build_center_eigenfunction,
    center_grid,
    center_modes,
    conjugate_expansion,
    eigen_residual,
    mode_gram,
    mode_zero_count,
)
from app.services.eigenfunction_models.operator import (
    Chart,
    ChartKind,
    CollarGrid,
    ModelOperator,
    ResidualReport,
    chart_grid,
    envelope_exponent,
    polar_grid,
    read_field_block,
    residual,
    write_field_block,
    write_field_csv,
)
from app.services.eigenfunction_models.profiles import (
    GaussianProfile,
    HermiteProfile,
    SampledProfile,
    ZeroProfile,
    profile_from_dict,
)
from app.services.eigenfunction_models.saddle import (
    GeneralizedSeries,
    SaddleDirection,
    SaddleSeries,
    apply_model_operator,
    build_saddle_eigenfunction,
    saddle_grid,
    saddle_models,
    transport_solve,
)
from app.services.eigenfunction_models.sink import (
    SinkExpansion,
    build_sink_eigenfunction,
    conjugate_sink,
    resonant_constant,
    sink_expansion,
    sink_grid,
)
from app.services.eigenfunction_models.threshold import (
    ThresholdExpansion,
    build_threshold_eigenfunction,
    threshold_expansion,
    threshold_fourier_field,
)

__all__ = [
    "CenterExpansion", "apply_q", "build_center_eigenfunction", "center_grid", "center_modes",
    "conjugate_expansion", "eigen_residual", "mode_gram", "mode_zero_count",
    "Chart", "ChartKind", "CollarGrid", "ModelOperator", "ResidualReport", "chart_grid",
    "envelope_exponent", "polar_grid", "read_field_block", "residual", "write_field_block", "write_field_csv",
    "GaussianProfile", "HermiteProfile", "SampledProfile", "ZeroProfile", "profile_from_dict",
    "GeneralizedSeries", "SaddleDirection", "SaddleSeries", "apply_model_operator",
    "build_saddle_eigenfunction", "saddle_grid", "saddle_models", "transport_solve",
    "SinkExpansion", "build_sink_eigenfunction", "conjugate_sink", "resonant_constant",
    "sink_expansion", "sink_grid",
    "ThresholdExpansion", "build_threshold_eigenfunction", "threshold_expansion", "threshold_fourier_field",
]
