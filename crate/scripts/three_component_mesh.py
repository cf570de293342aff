"""Generates the three-component test mesh: a disk of radius 4 with a hole of
radius 1 at the origin and a hole of radius 0.6 centred at (2.5, 0).

Tags: 0 outer circle, 1 central hole, 2 offset hole.
"""

import sys

import numpy as np
from scipy.spatial import Delaunay

H = 0.2
CIRCLES = [((0.0, 0.0), 4.0), ((0.0, 0.0), 1.0), ((2.5, 0.0), 0.6)]


def circle_points(center, radius):
    n = max(12, int(np.ceil(2 * np.pi * radius / H)))
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def inside_domain(p, margin):
    (c0, r0), holes = CIRCLES[0], CIRCLES[1:]
    ok = np.hypot(p[:, 0] - c0[0], p[:, 1] - c0[1]) < r0 - margin
    for c, r in holes:
        ok &= np.hypot(p[:, 0] - c[0], p[:, 1] - c[1]) > r + margin
    return ok


def main(path):
    rings = [circle_points(c, r) for c, r in CIRCLES]
    ring_tag = np.concatenate([np.full(len(p), k) for k, p in enumerate(rings)])
    xs = np.arange(-4.0, 4.0 + H, H)
    ys = np.arange(-4.0, 4.0 + H, H * np.sqrt(3) / 2)
    lattice = np.array([(x + (0.5 * H if j % 2 else 0.0), y) for j, y in enumerate(ys) for x in xs])
    lattice = lattice[inside_domain(lattice, 0.6 * H)]
    pts = np.vstack(rings + [lattice])
    tags = np.concatenate([ring_tag, np.full(len(lattice), -1)])

    tri = Delaunay(pts).simplices
    cent = pts[tri].mean(axis=1)
    tri = tri[inside_domain(cent, 0.0)]
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    area = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    tri = tri[area > 1e-12]
    area = area[area > 1e-12]
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]

    count = {}
    for t in tri:
        for i, j in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(i, j), max(i, j))
            count[key] = count.get(key, 0) + 1
    edges = []
    for (i, j), n in sorted(count.items()):
        if n == 1:
            if tags[i] < 0 or tags[i] != tags[j]:
                sys.exit(f"boundary edge {i}-{j} does not lie on a single circle")
            edges.append((i, j, tags[i]))

    used = np.unique(tri)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    with open(path, "w") as f:
        f.write("NONLOCAL-MESH v1\n")
        f.write(f"nodes {len(used)}\n")
        for p in pts[used]:
            f.write(f"{p[0]:.16e} {p[1]:.16e}\n")
        f.write(f"triangles {len(tri)}\n")
        for t in tri:
            f.write(f"{remap[t[0]]} {remap[t[1]]} {remap[t[2]]}\n")
        f.write(f"boundary_edges {len(edges)}\n")
        for i, j, tag in edges:
            f.write(f"{remap[i]} {remap[j]} {tag}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/three_component.mesh")
