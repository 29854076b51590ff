"""Post-hoc behavioral and surrogate-safety metrics over session logs."""

from .surrogate import (  # noqa: F401
    crossing_ttc,
    drac,
    following_ttc,
    lane_metrics,
    pair_ttc_states,
    time_headway,
    ttc_series,
)
from .instruments import (  # noqa: F401
    InstrumentResponse,
    NbackStimulus,
    grade_nback,
    score_instruments,
)
