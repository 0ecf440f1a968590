from .agc import Agc
from .carrier import CarrierLoop, ped, ped_s_curve
from .demod import dbpsk_demod, despread
from .framesync import FrameEvent, FrameSync, correlation_metric
from .receiver import (Detection, Receiver, ReceiverConfig, RxDiagnostics, downconvert,
                       front_end, receive, remove_dc)
from .timing import (TimingControl, TimingLoop, farrow_interpolate, gardner_ted,
                     timing_recovery)

__all__ = [
    "Agc", "CarrierLoop", "ped", "ped_s_curve", "dbpsk_demod", "despread", "FrameEvent",
    "FrameSync", "correlation_metric", "Detection", "Receiver", "ReceiverConfig",
    "RxDiagnostics", "downconvert", "front_end", "receive", "remove_dc", "TimingControl",
    "TimingLoop", "farrow_interpolate", "gardner_ted", "timing_recovery",
]
