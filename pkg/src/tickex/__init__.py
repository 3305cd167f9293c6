"""Time-series tick extraction from financial text.

Four stages: a high-recall constraint parser proposes relation candidates,
a time-series store scores their consistency with history, a character-level
LSTM estimates correctness, and a linear fusion classifier accepts or
discards each candidate.
"""

__version__ = "0.1.0"
