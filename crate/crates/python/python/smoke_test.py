"""Smoke test for the panotrack_py extension module."""

import panotrack_py as pt

a = pt.PanoBox(1900, 10, 40, 80, 1920)
assert a.wraps
print("box", a, "columns", a.columns())

b = a.shifted(30)
print("iou with shifted copy", round(pt.circular_iou(a, b), 4))

layout = pt.make_layout(1920, 7, 0.2)
print(layout)

pairs = pt.solve_matching([[0.9, 0.1], [0.2, 0.8]])
best, _ = pt.brute_force_matching([[0.9, 0.1], [0.2, 0.8]])
assert sorted(pairs) == [(0, 0), (1, 1)]
print("matching", pairs, "objective", best)

s = pt.generate("width = 1200\nheight = 400\nn_targets = 4\nn_frames = 60\nseam_crossings = 1\nembedding_dim = 16\nseed = 1\n")
tracks = s.track()
m = pt.evaluate(s.ground_truth(), tracks)
print("metrics", m)
assert m["ids"] == 0 and m["fp"] == 0

print("ok")
