"""Order-of-accuracy tables: state self-convergence in tau and Laplacian error in h."""
import numpy as np

from npc.grid import GridSpec, SpaceTimeGrid, build_grid
from npc.harness import laplacian_errors, time_self_convergence
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.physics import PotentialSpec
from npc.state import InitialData


def main():
    st = SpaceTimeGrid(build_grid(GridSpec(1, (1.0,), (63,))), 1.0, 32)
    x = st.grid.x
    init = InitialData(0.5 + 0.2 * np.cos(np.pi * x), 0.5 + 0.3 * np.cos(np.pi * x) ** 2)

    def u_fn(s):
        return 1.0 + 0.5 * np.cos(np.pi * s.grid.x)[None, :] * np.sin(np.pi * s.times)[:, None]

    diffs, ratios = time_self_convergence(st, PotentialSpec(), lambda s: NonlocalOperator(KernelSpec(), s),
                                          u_fn, init, levels=5)
    print("steps   ||S_tau - S_tau/2|| at T   ratio")
    for k, d in enumerate(diffs):
        r = f"{ratios[k - 1]:.3f}" if k else ""
        print(f"{32 * 2**k:5d}   {d:.4e}                {r}")
    errs, lr = laplacian_errors()
    print("\ncells   max |L_h cos(pi x) + pi^2 cos(pi x)|   ratio")
    for k, e in enumerate(errs):
        r = f"{lr[k - 1]:.3f}" if k else ""
        print(f"{16 * 2**k:5d}   {e:.4e}                           {r}")


if __name__ == "__main__":
    main()
