"""Quantify how recognizable the spaces of a building are from images.

The pipeline: crop perspective views out of equirectangular panoramas,
geo-tag them to spatial segments, train a small residual CNN to localize
each view, and read legibility out of the model - per-segment confidence
tables, class activation maps, segment-similarity structure and
clustering - then validate the whole thing against humans with a
three-way image-matching survey and a posterior predictive check.
"""

__version__ = "0.1.0"
