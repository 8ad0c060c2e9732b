"""Log-optimal portfolio engine.

Pattern-matched robust allocation (rlos), its CNN reinforcement-learning
ensemble (rlosrl), an exact discrete log-optimal oracle with theorem
verification, baseline strategies, and a deterministic backtesting harness.
"""

__version__ = "0.1.0"
