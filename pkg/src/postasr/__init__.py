"""Desk-scale ASR post-processing toolkit.

Generates corrupted/clean parallel text through a simulated acoustic
channel, trains a Transformer corrector on it, decodes CTC lattices with
n-gram shallow fusion, and evaluates everything under one WER harness.
"""

__version__ = "0.1.0"
