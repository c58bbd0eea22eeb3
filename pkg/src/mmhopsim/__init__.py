"""Discrete-event simulator for indoor 60 GHz multi-hop mesh networks.

Implements hop-by-hop multi-path routing (one primary and one backup
next-hop per destination, with local repair on blockage) on top of a
simplified contention-based 802.11ad MAC and a geometric free-space
channel model with box-shaped blockers.
"""

__version__ = "0.1.0"
