"""
Differentially private continual-release mechanisms and lower-bound tooling
"""

__version__ = "1.0.0"
