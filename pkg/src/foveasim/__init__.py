"""foveasim: adaptive foveated single-pixel imaging, simulated end to end.

Submodules:
  hadamard     Hadamard bases, fast transforms, differential mask pairs
  cellgrid     space-variant cell grids and stretch transforms
  scene        ground-truth dynamic scenes and image ingestion
  detector     simulated single-pixel detector (clock, noise, coefficients)
  reconstruct  uniform, sub-frame, and blip-frame reconstruction
  fusion       composite formation: weighted average, linear constraints
  guidance     fovea steering: motion, wavelet detail, stochastic, manual
  runtime      acquisition loop, session outputs, timing, persistence
  gateway      streaming endpoint for the browser console
"""

__version__ = "0.1.0"
