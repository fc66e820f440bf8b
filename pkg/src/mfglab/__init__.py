"""Adversarial mean-field game solver and GAN training-dynamics laboratory.

Three strands share one numerical core:

* an adversarial two-network solver for mean-field games, trained on
  pointwise PDE residuals evaluated with exact network input jets;
* exact minimax identities for classifier-based two-sample objectives on
  finite grids;
* discrete two-timescale training updates, their approximating SDEs, and
  the fluctuation-dissipation identities those SDEs satisfy, including a
  learning-rate scheduler driven by one of them.
"""

__version__ = "0.1.0"
