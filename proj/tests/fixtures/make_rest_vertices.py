"""Regenerates rest_vertices_v1.json from the skeleton file.

At the rest pose every rotation is the identity, so a joint sits at the sum of
the offsets along its chain and each proxy vertex at joint + local offset.
"""
import json
import pathlib

root = pathlib.Path(__file__).resolve().parents[2]
skel = json.loads((root / "data" / "skeleton_v1.json").read_text())

joints = []
for j, parent in enumerate(skel["parents"]):
    base = [0.0, 0.0, 0.0] if parent < 0 else joints[parent]
    joints.append([base[c] + skel["rest_offsets"][j][c] for c in range(3)])

vertices = [
    [joints[j][c] + v[c] for c in range(3)]
    for j, proxy in enumerate(skel["vertex_proxy"])
    for v in proxy
]

out = {"skeleton_version": skel["version"], "joints": joints, "vertices": vertices}
(pathlib.Path(__file__).parent / "rest_vertices_v1.json").write_text(json.dumps(out, indent=1) + "\n")
