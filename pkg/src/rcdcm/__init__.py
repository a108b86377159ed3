"""RC signal-line current response via dynamic capacitance matching.

Pipeline: parse an RC netlist, reduce its driving-point admittance to
pole-residue form, characterize (or load) the driver's fixed-capacitance
current tables, then step the output voltage and match the capacitance
curve whose library current agrees with the closed-form RC current at
each level.  A trapezoidal MNA transient simulator serves as the golden
reference throughout.
"""

from .netlist import MnaSystem, RcNetwork, assemble_mna, parse_netlist, serialize_netlist

__all__ = [
    "MnaSystem",
    "RcNetwork",
    "assemble_mna",
    "parse_netlist",
    "serialize_netlist",
]

__version__ = "0.1.0"
