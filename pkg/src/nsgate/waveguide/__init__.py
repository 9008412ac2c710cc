"""Waveguide catch/interact/release simulation of the NS gate."""

from .bath import (BathDiscretization, BathState, WavepacketSpec, build_lorentzian_input,
                   tilde_reference_state, waveform_overlap)
from .fidelity import (CatchReleaseSetup, dissipation_curves, export_waveforms, full_ns_fidelity,
                       ideal_output, mirrored_release, optimize_schedule, time_reversal_overlap)
from .propagate import (MemoryBudgetError, SectorBasis, StepControl, final_state,
                        propagate_catch_release)
from .schedule import CouplerSchedule, Segment, catch_release_schedule, get_preset, presets

__all__ = [
    "BathDiscretization", "BathState", "CatchReleaseSetup", "CouplerSchedule", "MemoryBudgetError",
    "SectorBasis", "Segment", "StepControl", "WavepacketSpec", "build_lorentzian_input",
    "catch_release_schedule", "dissipation_curves", "export_waveforms", "final_state",
    "full_ns_fidelity", "get_preset", "ideal_output", "mirrored_release", "optimize_schedule", "presets",
    "time_reversal_overlap",
    "propagate_catch_release", "tilde_reference_state", "waveform_overlap",
]
