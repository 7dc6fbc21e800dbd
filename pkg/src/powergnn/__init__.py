"""Learning binary power allocation on interference networks.

A graph-filter policy network reads the instantaneous channel matrix as a
graph shift operator and emits per-transmitter transmit probabilities; a
model-free primal-dual loop trains it against average-rate objectives and
constraints using only sampled rewards.
"""

__version__ = "0.1.0"
