"""Step-well problem end to end: spectrum, linking frame, minimax descent,
Newton certification and an independent shooting check."""
import numpy as np

from indeflink.cli import build_problem, make_frame
from indeflink.config import preset
from indeflink.linking import verify_geometry
from indeflink.minimax import SolverOptions, solve, spectral_content
from indeflink.oracles import shooting_oracle_1d

problem = build_problem(preset("t1"))
split, th = problem.split, problem.threshold
print(f"dim E- = {split.neg_idx.size}, sigma- = {split.sigma_minus:.6f}, "
      f"sigma+ = {split.sigma_plus:.6f}")
print(f"a0 = {th.a0:.6f} (lower bound {th.lower_bound:.6f}); asymptotic slope a = "
      f"{problem.model.nonlinearity.a_asymptote}")

frame = make_frame(problem)
geo = verify_geometry(problem.model, frame, n=1000)
print(f"frame: rho = {frame.rho:.4f}, r1 = {frame.r1:.4f}, r2 = {frame.r2:.4f}, "
      f"alpha = {frame.alpha:.4f}")
print(f"  min I on S = {geo.min_S:.4f}, max I on faces = "
      + ", ".join(f"{k}: {v:.2e}" for k, v in geo.face_max.items()))

rep = solve(problem.model, frame, SolverOptions())
print(f"converged = {rep.converged} after {rep.stages} stages")
print("  c history:", np.array2string(np.array(rep.c_history), precision=8))
print(f"  Cerami measure {rep.cerami:.2e}, Newton residual {rep.newton.residual:.1e}, "
      f"order {rep.newton.order:.3f}")
print("  modes used by u*:", spectral_content(problem.model, rep.z_star))

shots = shooting_oracle_1d(problem.model)
cand, dist = shots.closest(rep.u_star)
print(f"shooting: {len(shots.candidates)} even solution(s); nearest has u(0) = "
      f"{cand.amplitude:.8f}, relative L2 distance {dist:.2e}")
