"""Discrete-event simulator for multi-load-balancer data-center traffic.

Heuristic policies (ECMP/WCMP/AWCMP/LSQ/SED) and trainable weight agents
(QMIX, independent SAC, single-agent SAC) drive per-flow shortest expected
delay decisions over partially observed server state.
"""

__version__ = "0.1.0"
