"""
From raw GPS track to a location catalogue
==========================================

Shows the two preprocessing stages that turn a noisy position stream
into discrete locations: stay-point detection (where did the device
linger) followed by density clustering (which lingering spots are the
same place).
Run it with:  python3 demos/03_staypoints_walkthrough.py
"""

import numpy as np

from nextloc.geoenc import GeoPoint
from nextloc.mobdata import cluster_staypoints, detect_staypoints
from nextloc.util import make_rng

rng = make_rng(0, "gps-demo")

# Simulate a day: home in the morning, a commute, eight hours at the
# office, a cafe stop, then home again. Fixes every 60 s with ~15 m of
# GPS jitter (units are meters on a local plane).
HOME = np.array([0.0, 0.0])
OFFICE = np.array([3000.0, 1200.0])
CAFE = np.array([2600.0, 1500.0])

def dwell(center, start, minutes):
    out = []
    for i in range(minutes):
        p = center + rng.normal(0.0, 15.0, size=2)
        out.append((start + 60.0 * i, GeoPoint(p[0], p[1])))
    return out

def travel(a, b, start, minutes):
    out = []
    for i in range(minutes):
        frac = i / minutes
        p = a + frac * (b - a) + rng.normal(0.0, 15.0, size=2)
        out.append((start + 60.0 * i, GeoPoint(p[0], p[1])))
    return out

t = 6 * 3600.0
track = []
for leg, nxt in (
    (dwell(HOME, t, 90), 90),               # breakfast at home
    (travel(HOME, OFFICE, t + 90 * 60, 25), 25),
    (dwell(OFFICE, t + 115 * 60, 480), 480),  # work day
    (travel(OFFICE, CAFE, t + 595 * 60, 8), 8),
    (dwell(CAFE, t + 603 * 60, 45), 45),
    (travel(CAFE, HOME, t + 648 * 60, 30), 30),
    (dwell(HOME, t + 678 * 60, 120), 120),    # evening at home
):
    track.extend(leg)

print(f"raw track: {len(track)} fixes over {track[-1][0] / 3600 - 6:.1f} hours")

# Stage 1: a stay-point is any stretch of at least 20 minutes where the
# device stayed within 200 m. Commute legs never qualify.
stays = detect_staypoints(track, dist_threshold=200.0, time_threshold=20 * 60.0)
print(f"\nstay-points found: {len(stays)}")
for s in stays:
    mins = (s.departure - s.arrival) / 60.0
    print(f"  ({s.centroid.x:7.1f}, {s.centroid.y:7.1f})  {mins:5.0f} min")

# Stage 2: the two home stays are separate events at the same place.
# Density clustering with a 250 m radius merges them into one Location.
index = cluster_staypoints(stays, eps=250.0, min_samples=1)
print(f"\nlocations after clustering: {len(index.ids())}")
for lid in index.ids():
    loc = index.location(lid)
    print(f"  {lid}  centroid ({loc.centroid.x:7.1f}, {loc.centroid.y:7.1f})")

assert len(stays) == 4 and len(index.ids()) == 3, "expected 4 stays collapsing to 3 places"
print("\nfour stay events collapsed into three distinct places, as expected")
