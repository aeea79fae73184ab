"""Brute-force check that S and Q link on a 3 + 3 dimensional truncation:
for each deformation Φ_t a point of Φ_t(Q) ∩ S is located on a grid of t."""
import numpy as np

from indeflink.linking import (LinkingFrame, SigmaHomotopy, identity_homotopy,
                               verify_link_smallcase)

frame = LinkingFrame.for_subspaces(3, 3, rho=1.0, r1=2.0, r2=3.0)
b = np.array([[1.0], [0.0], [0.0]])


def rotate(t, z):
    a = 0.5 * np.pi * t
    out = z[:3].copy()
    out[0] = np.cos(a) * z[0] - np.sin(a) * z[1]
    out[1] = np.sin(a) * z[0] + np.cos(a) * z[1]
    return out


homotopies = [
    identity_homotopy(3, 3),
    SigmaHomotopy("compact_shift", lambda t, z: z[:3].copy(),
                  lambda t, z: 0.3 * t * np.tile(b, (1, z.shape[1])), b),
    SigmaHomotopy("e1_rotation", rotate, lambda t, z: np.zeros((3, z.shape[1])), np.zeros((3, 0))),
]
for hom in homotopies:
    rep = verify_link_smallcase(frame, hom, n_grid=11)
    gap = min(s.boundary_gap for s in rep.steps)
    print(f"{hom.name:14s} witnessed at all t: {rep.all_witnessed}  "
          f"(min distance of Φ_t(∂Q) to S: {gap:.3f})")

# a full-rank compact part is rejected before any search
full = SigmaHomotopy("full_rank", lambda t, z: z[:3], lambda t, z: t * z[3:], np.eye(3))
try:
    verify_link_smallcase(frame, full)
except Exception as exc:
    print(f"{full.name:14s} rejected: {exc}")
