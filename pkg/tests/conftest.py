import numpy as np

from spinsim.fastsum import KernelSpec
from spinsim.models import Constant, NormConstants, RateModel, _KernelWeights


class ConstantRateModel(RateModel):
    """State-independent rates; sites are iid two-state chains.

    Kernel-backed with all-zero taps so large n stays cheap (no dense
    n x n matrix).
    """

    def __init__(self, n, q_up, q_down):
        kernel = KernelSpec((int(n),), np.zeros(2 * int(n) - 1))
        super().__init__(_KernelWeights(kernel), 0.0,
                         Constant(q_up), Constant(q_down))
        self.q_up = float(q_up)
        self.q_down = float(q_down)

    def norm_constants(self):
        return NormConstants(
            q_inf=max(self.q_up, self.q_down), dstar_q_1=0.0,
            d_q_1=self.q_up + self.q_down, dstar_q_inf=0.0,
            dstar_q_21=0.0, gamma_n=0.0, big_gamma_n=0.0)
