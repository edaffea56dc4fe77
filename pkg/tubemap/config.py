"""
Default parameters and numeric tolerances for tubemap.
Edit these values to change the defaults used by the library and the CLI.
"""

# Seam-strip width d (fraction of pi on each side of the seam)
DEFAULT_STRIP_WIDTH = 0.05

# Free-boundary extension
DEFAULT_LAYERS = 1  # K
DEFAULT_TAU = 0.2  # normal blend of the extension direction
DEFAULT_OMEGA = 0.5  # cycle-Laplacian smoothing weight

# Toroidal bending
DEFAULT_BEND_MODE = "minor"
DEFAULT_RHO_MINOR = 5.0
DEFAULT_RHO_MAJOR = 0.99

# Beltrami coefficients with |mu| at or above this are clamped (or rejected in strict mode)
MU_CLAMP = 1.0 - 1e-8

# Face area below DEGENERATE_AREA_RATIO * mean face area is degenerate
DEGENERATE_AREA_RATIO = 1e-12

# Seam twins must agree to this tolerance when glued
GLUE_TOL = 1e-8

# Relative residual accepted from the sparse solver
SOLVER_RTOL = 1e-10

# Golden-section search on the rectangle length stops at bracket width < rtol * L
LENGTH_SEARCH_RTOL = 1e-4
LENGTH_BRACKET = (0.25, 4.0)  # multiples of the conformal-module estimate

# Tube coordinates may leave [0, L*] by this much before being clamped silently
TUBE_Z_TOL = 1e-9

# Writers
FLOAT_DIGITS = 9  # significant digits for mesh and report output

# Worker threads for batch runs (read from the environment by the CLI)
THREADS_ENV = "TUBEMAP_THREADS"
