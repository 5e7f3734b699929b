"""Special-event rail ridership analysis from fare-gate taps.

Trip chaining, station signatures, train recovery by 1-D HDBSCAN, FIFO
boarding simulation, capacity estimation, schedule optimisation and
ridership prediction.
"""

__version__ = "0.1.0"
