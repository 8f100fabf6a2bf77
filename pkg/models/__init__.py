"""
Modelos de la red LED
IMPORTANTE: repnr antes que network, la UNet se construye con bloques RepNR
"""

# 1. Bloque reparametrizable (sin dependencias de la red)
from models.repnr import CSABranch, PlainConv, RepNRBlock, RepNRPhase

# 2. UNet y transiciones de fase
from models.network import LEDNetwork, PhaseTransition, build_network, deploy_network, set_phase

__all__ = [
    "CSABranch",
    "PlainConv",
    "RepNRBlock",
    "RepNRPhase",
    "LEDNetwork",
    "PhaseTransition",
    "build_network",
    "deploy_network",
    "set_phase",
]
