"""Packet-level simulator for delay variation of video and voice over
DiffServ and DiffServ/MPLS-TE networks, IPv4 and IPv6."""

__version__ = "0.1.0"
