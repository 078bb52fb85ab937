"""Division recognition from continuous Bengali speech.

Pipeline: WAV ingestion -> 8-10 s segmentation + spectral-subtraction noise
reduction -> MFCC (40 equal-area mel filters, first 13 coefficients) + delta
features -> per-segment 26-dim mean vector -> shallow dense network trained
with Adam and categorical cross-entropy -> accuracy / confusion-matrix report.
"""

__version__ = "0.1.0"
