"""Toolkit for estimating human perceptual thresholds of local exposure
shifts and training dense classifiers that approximate them.

Subpackages and modules:

- ``color``: sRGB/CIELAB conversion and the masked exposure transform
- ``psychometric``: Weibull psychometric model, MLE fitting, bootstrap
- ``quest``: Bayesian adaptive staircase for stimulus placement
- ``datagen``: regression/classification sample generation and augmentation
- ``nn``: minimal differentiable layer zoo with numba-accelerated kernels
- ``models``: exposure-regression (AET) and threshold-classifier (PTC) nets
- ``evaluate``: decision-boundary recovery and cross-validation harness
- ``session``: live/simulated 2AFC experiment sessions
- ``server``: JSON-over-HTTP API for the browser frontend
- ``cli``: command-line driver for every pipeline stage
"""

__version__ = "0.1.0"
