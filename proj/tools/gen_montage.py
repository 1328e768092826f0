#!/usr/bin/env python3
"""Builds data/montage_28.csv and data/montage_28_neighbors.csv.

Electrodes are placed on a unit sphere from 10-20/10-10 rules (Cz at the
vertex, row spacing 18 degrees, lateral positions evenly spaced along the
great circle from the midline electrode to the 72-degree ring), then
projected to the head plane with an azimuthal-equidistant map on a sphere of
radius 0.095 m. Neighbour counts use Euclidean distance < 0.05 m in the
plane.
"""
import csv
import math
import pathlib

RADIUS_M = 0.095
NEIGHBOR_RADIUS_M = 0.05


def sph(theta_deg, az_deg):
    t, a = math.radians(theta_deg), math.radians(az_deg)
    return (math.sin(t) * math.sin(a), math.sin(t) * math.cos(a), math.cos(t))


def slerp(p, q, f):
    dot = max(-1.0, min(1.0, sum(x * y for x, y in zip(p, q))))
    om = math.acos(dot)
    if om < 1e-12:
        return p
    s0 = math.sin((1 - f) * om) / math.sin(om)
    s1 = math.sin(f * om) / math.sin(om)
    return tuple(s0 * x + s1 * y for x, y in zip(p, q))


def project(p):
    x, y, z = p
    theta = math.acos(max(-1.0, min(1.0, z)))
    az = math.atan2(x, y)
    r = RADIUS_M * theta
    return (r * math.sin(az), r * math.cos(az))


# row prefix -> (midline label, midline inclination, midline azimuth, lateral azimuth at 72 deg)
ROWS = {
    "F": ("Fz", 36.0, 0.0, 54.0),
    "FC": ("FCz", 18.0, 0.0, 72.0),
    "C": ("Cz", 0.0, 0.0, 90.0),
    "CP": ("CPz", 18.0, 180.0, 108.0),
    "P": ("Pz", 36.0, 180.0, 126.0),
}

# 28 channels: frontal, fronto-central, central, centro-parietal, parietal rows
LAYOUT = [
    ("F", [3, 1, 0, 2, 4]),
    ("FC", [5, 3, 1, 0, 2, 4, 6]),
    ("C", [5, 3, 1, 0, 2, 4, 6]),
    ("CP", [5, 3, 1, 0, 2, 4, 6]),
    ("P", [3, 4]),
]


def position(row, idx):
    mid_label, th, az, lat_az = ROWS[row]
    mid = sph(th, az) if th > 0 else (0.0, 0.0, 1.0)
    if idx == 0:
        return mid
    # odd = left (negative x), even = right; index/2 steps of the 4-step arc to the 72-degree ring
    left = idx % 2 == 1
    steps = (idx + 1) // 2
    end = sph(72.0, -lat_az if left else lat_az)
    return slerp(mid, end, steps / 4.0)


def label(row, idx):
    return ROWS[row][0] if idx == 0 else f"{row}{idx}"


def main():
    root = pathlib.Path(__file__).resolve().parent.parent / "data"
    root.mkdir(exist_ok=True)
    rows = []
    for row, idxs in LAYOUT:
        for i in idxs:
            x, y = project(position(row, i))
            rows.append((label(row, i), x, y))
    assert len(rows) == 28

    with open(root / "montage_28.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label", "x_m", "y_m"])
        for lab, x, y in rows:
            w.writerow([lab, f"{x:.6f}", f"{y:.6f}"])

    with open(root / "montage_28_neighbors.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label", "neighbors", "labels"])
        for i, (lab, x, y) in enumerate(rows):
            nb = [rows[j][0] for j in range(len(rows))
                  if j != i and math.hypot(x - rows[j][1], y - rows[j][2]) < NEIGHBOR_RADIUS_M]
            w.writerow([lab, len(nb), " ".join(nb)])


if __name__ == "__main__":
    main()
