"""Camera and mirror layout optimisation for a deformable Fin Ray finger.

A 2D cross-section of the finger is bent by a parametric load model; a single
camera on the base sees the tactile pad directly or through one reflection
from planar mirrors mounted on the back beam. CMA-ES searches the mirror
poses and camera pose for the layout whose ray fan covers the most pad
targets across all sampled loads.
"""

__version__ = "0.1.0"
