"""Generate the flower-domain mesh in the native thinfold mesh format.

The domain is the square (0,16)^2 with the quadrilateral hole
(6,7), (7,10), (10,9), (9,6) removed. Four cubic Bezier creases join the
midpoints of the outer sides with the hole corners; the second to fourth
crease are quarter turns of the first about (8,8). Elements are six-node
triangles whose crease midpoints lie on the Bezier curves.

Requires the gmsh Python module. Usage:

    python3 contrib/flower_mesh.py data/flower.mesh [target_elements]

The element size is bisected until the element count matches the target
(1904 by default); the output is deterministic for a given gmsh version.
"""

import math
import sys

import gmsh

CENTER = (8.0, 8.0)
HOLE = [(6.0, 7.0), (9.0, 6.0), (10.0, 9.0), (7.0, 10.0)]
ALPHA = math.pi / 6.0


def rotate(p, quarter_turns):
    x, y = p[0] - CENTER[0], p[1] - CENTER[1]
    for _ in range(quarter_turns):
        x, y = -y, x
    return (x + CENTER[0], y + CENTER[1])


def first_crease():
    c, s = math.cos(ALPHA), math.sin(ALPHA)
    start = (8.0, 0.0)
    near_start = (8.0 + 3.162 * c, 3.162 * s)
    near_end = (10.0 + 3.0 * c - s, 9.0 - c - 3.0 * s)
    end = (10.0, 9.0)
    return [start, near_start, near_end, end]


def build(size):
    gmsh.model.add("flower")
    occ = gmsh.model.occ
    outer = occ.addRectangle(0.0, 0.0, 0.0, 16.0, 16.0)
    hole_pts = [occ.addPoint(x, y, 0.0) for x, y in HOLE]
    hole_lines = [occ.addLine(hole_pts[i], hole_pts[(i + 1) % 4]) for i in range(4)]
    hole = occ.addPlaneSurface([occ.addCurveLoop(hole_lines)])
    domain, _ = occ.cut([(2, outer)], [(2, hole)])
    creases = []
    for k in range(4):
        pts = [occ.addPoint(*rotate(p, k), 0.0) for p in first_crease()]
        creases.append(occ.addBezier(pts))
    _, mapping = occ.fragment(domain, [(1, c) for c in creases])
    occ.synchronize()
    crease_tags = sorted({tag for m in mapping[1:] for dim, tag in m if dim == 1})
    gmsh.option.setNumber("Mesh.MeshSizeMin", size)
    gmsh.option.setNumber("Mesh.MeshSizeMax", size)
    gmsh.option.setNumber("Mesh.Algorithm", 6)
    gmsh.option.setNumber("Mesh.RandomSeed", 1)
    gmsh.model.mesh.generate(2)
    gmsh.model.mesh.setOrder(2)
    return crease_tags


def count_triangles():
    types, tags, _ = gmsh.model.mesh.getElements(2)
    return sum(len(t) for ty, t in zip(types, tags) if ty == 9)


def extract(crease_tags):
    node_tags, coords, _ = gmsh.model.mesh.getNodes()
    index = {}
    nodes = []
    for i, tag in enumerate(node_tags):
        index[int(tag)] = len(nodes)
        nodes.append((coords[3 * i], coords[3 * i + 1]))
    elements = []
    types, _, conn = gmsh.model.mesh.getElements(2)
    for ty, c in zip(types, conn):
        if ty != 9:
            continue
        for e in range(len(c) // 6):
            g = [index[int(t)] for t in c[6 * e: 6 * e + 6]]
            # gmsh: corners, then midpoints of (0,1), (1,2), (2,0)
            el = [g[0], g[1], g[2], g[4], g[5], g[3]]
            (x0, y0), (x1, y1), (x2, y2) = (nodes[el[0]], nodes[el[1]], nodes[el[2]])
            if (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0) < 0.0:
                el = [el[0], el[2], el[1], el[3], el[5], el[4]]
            elements.append(el)
    folds = set()
    for tag in crease_tags:
        types, _, conn = gmsh.model.mesh.getElements(1, tag)
        for ty, c in zip(types, conn):
            if ty != 8:
                continue
            for e in range(len(c) // 3):
                a, b = index[int(c[3 * e])], index[int(c[3 * e + 1])]
                folds.add((min(a, b), max(a, b)))
    # drop nodes not referenced by any triangle (geometry points only)
    used = sorted({n for el in elements for n in el})
    renum = {old: new for new, old in enumerate(used)}
    nodes = [nodes[i] for i in used]
    elements = [[renum[n] for n in el] for el in elements]
    folds = sorted((renum[a], renum[b]) for a, b in folds)
    return nodes, elements, folds


def write(path, nodes, elements, folds, pinned):
    with open(path, "w") as f:
        f.write("# flower domain, generated by contrib/flower_mesh.py\n")
        f.write(f"NODES {len(nodes)}\n")
        for i, (x, y) in enumerate(nodes):
            f.write(f"{i} {x:.16e} {y:.16e}\n")
        f.write(f"ELEMENTS {len(elements)}\n")
        for t, el in enumerate(elements):
            f.write(f"{t} " + " ".join(str(n) for n in el) + "\n")
        f.write(f"FOLD_EDGES {len(folds)}\n")
        for a, b in folds:
            f.write(f"{a} {b}\n")
        f.write(f"DIRICHLET_VERTICES {len(pinned)}\n")
        for v in pinned:
            f.write(f"{v}\n")


def main():
    path = sys.argv[1]
    target = int(sys.argv[2]) if len(sys.argv) > 2 else 1904
    gmsh.initialize()
    gmsh.option.setNumber("General.Terminal", 0)
    lo, hi = 0.2, 1.5
    best = None
    for _ in range(60):
        size = 0.5 * (lo + hi)
        gmsh.clear()
        creases = build(size)
        n = count_triangles()
        if best is None or abs(n - target) < abs(best[1] - target):
            best = (size, n)
        if n == target:
            break
        if n > target:
            lo = size
        else:
            hi = size
    size, n = best
    gmsh.clear()
    creases = build(size)
    nodes, elements, folds = extract(creases)
    corner_ids = {n for el in elements for n in el[:3]}
    pinned = []
    for p in [(8.0, 0.0), (8.0, 16.0)]:
        v = min(corner_ids, key=lambda i: (nodes[i][0] - p[0]) ** 2 + (nodes[i][1] - p[1]) ** 2)
        pinned.append(v)
    write(path, nodes, elements, folds, pinned)
    print(f"size {size:.6f}: {len(elements)} elements, {len(nodes)} nodes, {len(folds)} fold edges")
    gmsh.finalize()


if __name__ == "__main__":
    main()
