"""Multimodal sensor ingestion, clock alignment, and feature extraction."""

from .clock import ClockFitError, ClockMap, fit_clock_map  # noqa: F401
from .epochs import Epoch, EpochResult, cut_epochs  # noqa: F401
from .features import (  # noqa: F401
    CardiacFeatures,
    EdaDecomposition,
    Fixation,
    ScrEvent,
    detect_fixations,
    eda_decompose,
    gaze_heatmap,
    hr_from_bvp,
)
from .streams import (  # noqa: F401
    Modality,
    SensorStream,
    StreamFormatError,
    read_stream_csv,
    write_stream_csv,
)
