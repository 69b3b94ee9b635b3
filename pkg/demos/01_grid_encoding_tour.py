"""
Multiscale coordinate encoding tour
===================================

A walk through the sinusoidal grid encoding that turns a raw (x, y)
coordinate into a feature vector the location encoder can digest.
Run it with:  python3 demos/01_grid_encoding_tour.py
"""

import numpy as np

from nextloc.geoenc import GeoPoint, GridSpec, grid_pe, grid_pe_batch, scale_radii

# The encoding covers wavelengths from r_min to r_max on a geometric
# ladder. Three scales between 1 and 100 land exactly on 1, 10, 100.
spec = GridSpec(r_min=1.0, r_max=100.0, n_scales=3)
print("radii:", scale_radii(spec))

# Each scale contributes four numbers per point: cos and sin of x and y
# divided by the scale radius. The full vector has length 4 * n_scales.
p = GeoPoint(3.0, 7.0)
print("encoding of (3, 7):", np.round(grid_pe(p, spec), 4))

# The origin always encodes to the repeating pattern [1, 0, 1, 0]:
# cos(0) = 1 and sin(0) = 0 at every scale.
print("encoding of (0, 0):", grid_pe(GeoPoint(0.0, 0.0), spec))

# Why multiple scales? A single wavelength either aliases nearby points
# (too short) or cannot tell them apart (too long). The ladder lets the
# downstream network pick whichever scale resolves the pattern it needs.
spec_many = GridSpec(r_min=0.5, r_max=50.0, n_scales=16)
origin = grid_pe(GeoPoint(0.0, 0.0), spec_many)

print("\ndistance in encoding space as a point moves away from the origin:")
for step in (0.1, 0.5, 1.0, 5.0, 10.0, 50.0):
    enc = grid_pe(GeoPoint(step, 0.0), spec_many)
    print(f"  offset {step:5.1f}  ->  ||pe(p) - pe(0)|| = {np.linalg.norm(enc - origin):.4f}")

# Nearby points get nearby encodings and the distance saturates once the
# offset exceeds the largest wavelength. That smooth-then-flat profile is
# what makes the encoding useful as a spatial prior.

# Batched form for many points at once; rows match the scalar version.
pts = np.array([[3.0, 7.0], [0.0, 0.0], [10.0, -4.0]])
batch = grid_pe_batch(pts, spec)
assert np.array_equal(batch[0], grid_pe(GeoPoint(3.0, 7.0), spec))
print("\nbatch shape:", batch.shape)
