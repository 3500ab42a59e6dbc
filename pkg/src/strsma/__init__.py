"""Space-time rate-splitting precoder design for multibeam LEO downlinks."""
__version__ = "0.1.0"

from .channel import (ChannelSet, SatelliteGeometry, beam_gain, draw_saa_samples,  # noqa: E402
                      impair_csit, ntn_feasibility, place_users, synth_channel)
from .qcqp import QcqpProblem, QcqpSolution, solve  # noqa: E402
from .spacetime import FeedPair, RateReport, select_feed_pair, simulate_link  # noqa: E402
from .wmmse import Mode, PrecoderSolution, WmmseParams, frr_rate, solve_maxmin  # noqa: E402

__all__ = [
    "ChannelSet", "SatelliteGeometry", "beam_gain", "draw_saa_samples", "impair_csit",
    "ntn_feasibility", "place_users", "synth_channel", "QcqpProblem", "QcqpSolution",
    "solve", "FeedPair", "RateReport", "select_feed_pair", "simulate_link", "Mode",
    "PrecoderSolution", "WmmseParams", "frr_rate", "solve_maxmin",
]
