"""How the 2D sparsemax polar rule converges with the number of angular nodes.

Prints max |r_n - r_2048| for a few basis widths; narrow bases relative to
the support need more nodes.
"""

import numpy as np

from contattn import attention as att
from contattn.densities import CanonicalScore2D

score = CanonicalScore2D.from_moments([0.5, 0.5], [[0.03, 0.01], [0.01, 0.02]])
nodes = [64, 128, 256, 512, 1024]

print("var     " + " ".join(f"{n:>9d}" for n in nodes))
for var in (1e-1, 1e-2, 1e-3, 1e-4):
    basis = att.RBFBasis.grid_2d(16, var)
    ref = att.forward_sparsemax_2d(score, basis, 2048, check=False)
    errs = [np.abs(att.forward_sparsemax_2d(score, basis, n, check=False) - ref).max() for n in nodes]
    print(f"{var:<7.0e} " + " ".join(f"{e:9.1e}" for e in errs))
