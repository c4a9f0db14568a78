"""Virtual axle detection toolkit.

Detects axle crossing times from bridge acceleration recordings: wheel-load
based labeling, multi-wavelet scalogram transformation, a fully convolutional
per-sample classifier trained with focal loss, and prominence-based peak
extraction with threshold-gated scoring.
"""

__version__ = "0.1.0"
