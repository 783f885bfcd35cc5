"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def dist(p, q):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def nearest_linear(points, q):
    best, best_d = -1, math.inf
    for i, p in enumerate(points):
        d = dist(p, q)
        if d < best_d:
            best, best_d = i, d
    return best, best_d


def fps_greedy(points, k, start):
    """O(n k) greedy FPS computed from scratch each round."""
    chosen = [start]
    while len(chosen) < k:
        best, best_d = -1, -1.0
        for i, p in enumerate(points):
            if i in chosen:
                continue
            d = min(dist(p, points[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def voxel_set(points, res):
    return {tuple(int(math.floor(c / res)) for c in p) for p in points}


def chamfer_brute(a, b):
    ab = sum(min(dist(p, q) for q in b) for p in a) / len(a)
    ba = sum(min(dist(q, p) for p in a) for q in b) / len(b)
    return 0.5 * (ab + ba)


def iou_brute(a, b, res):
    va, vb = voxel_set(a, res), voxel_set(b, res)
    return 100.0 * len(va & vb) / len(va | vb)


def line_distance(o, t, h):
    """Distance from h to the line through o with direction t (any length)."""
    t = np.asarray(t, float) / np.linalg.norm(t)
    v = np.asarray(h, float) - np.asarray(o, float)
    along = float(v @ t)
    return math.sqrt(max(float(v @ v) - along * along, 0.0))
