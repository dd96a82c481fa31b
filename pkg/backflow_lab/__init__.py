"""backflow-lab package
Probability-constrained correlation measures on evolving probe states, and
the correlation-backflow witness of non-CP-divisible dynamics.
"""

__all__ = [
    "channels",
    "cli",
    "config",
    "correlations",
    "discrimination",
    "dynamics",
    "errors",
    "experiment",
    "numkernel",
    "probe",
    "quantum_core",
    "report",
    "report_io",
    "runner",
    "sdp",
    "utils"
]
__version__ = "0.1.0"
