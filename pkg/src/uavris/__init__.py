"""Multi-UAV / RIS / movable-antenna network simulator and decentralized trainer."""

__version__ = "0.1.0"
