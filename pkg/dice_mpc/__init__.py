"""
DICE integrated assessment model with direct transcription, an
augmented-Lagrangian NLP solver, receding-horizon control and social cost
of carbon estimates.
"""

__version__ = "0.3.0"
