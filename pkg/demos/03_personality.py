"""Personality features from long-term tracks.

Compares a straight, a wavering and a crowded walker by linearity, speed and
mean closest-neighbor distance.
"""

import numpy as np

from crowdpath import extract_personality


def main():
    t = np.arange(24)
    straight = np.column_stack([t * 0.5, np.zeros_like(t, dtype=float)])
    wavering = np.column_stack([t * 0.4, 0.6 * np.sin(t / 2.0)])
    crowded = straight.copy()
    neighbors = [[p + (0.0, 0.7), p + (1.0, -0.9)] for p in crowded]

    for name, xy, nbs in (("straight", straight, None), ("wavering", wavering, None),
                          ("crowded", crowded, neighbors)):
        p = extract_personality(xy, nbs)
        print(f"{name:9s} linearity {p.l:6.2f}%  speed {p.v:5.2f} m/s  closest neighbor {p.d:4.2f} m")


if __name__ == "__main__":
    main()
