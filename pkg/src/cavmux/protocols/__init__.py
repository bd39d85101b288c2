from .antibunching import G2Run, ideal_stream, poisson_stream, run_g2_experiment
from .coherence import ScanRecord, run_echo, run_rabi
from .interrogation import (
    AggregateLine,
    InterrogationError,
    InterrogationPlan,
    InterrogationResult,
    IntervalRecord,
    pair_emitters,
    run_interrogation,
)
from .setup import Setup
from .spectrum import ScanPlan, Spectrum, expected_signal, run_spectral_scan
from .switch import CavityController, RetuneRecord, SwitchError, cavity_switch

__all__ = [
    "AggregateLine",
    "CavityController",
    "G2Run",
    "InterrogationError",
    "InterrogationPlan",
    "InterrogationResult",
    "IntervalRecord",
    "RetuneRecord",
    "ScanPlan",
    "ScanRecord",
    "Setup",
    "Spectrum",
    "SwitchError",
    "cavity_switch",
    "expected_signal",
    "ideal_stream",
    "pair_emitters",
    "poisson_stream",
    "run_echo",
    "run_g2_experiment",
    "run_interrogation",
    "run_rabi",
    "run_spectral_scan",
]
