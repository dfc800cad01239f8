"""Simulated-pretraining workbench for pansharpening.

Synthesizes multispectral/panchromatic training pairs from ordinary images,
degrades and augments them, pretrains a small fusion network written in
numpy, and evaluates zero-shot transfer and one-shot full/freeze tuning.
"""

__version__ = "0.1.0"
