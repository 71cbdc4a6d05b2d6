"""Compare loss values and sample weights as the true-class probability moves.

The inverted-weight logarithmic loss multiplies the log term by
1 / log(p + beta). Near p = 1 that weight collapses toward 1/log(1+beta),
so easy samples are damped; near p = 0 it grows, so hard samples dominate
the gradient. beta tunes how aggressive the reweighting is.
"""

import numpy as np

from ecgbalance import (
    BaselineLossConfig,
    GRADCHECK_LOSSES,
    IwlConfig,
    gradient_check,
    iwl_point_value,
    iwl_weight,
)

ps = np.array([0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99])

print("sample weight 1/|log(p + beta)| by beta:")
print("  p      " + "".join(f"b={b:<8}" for b in (0.1, 0.3, 1.0, 3.0)))
for p in ps:
    row = "".join(f"{iwl_weight(p, IwlConfig(beta=b)):<10.3f}" for b in (0.1, 0.3, 1.0, 3.0))
    print(f"  {p:<5}  {row}")

print("\nloss value at the same points (beta=0.3) vs plain cross-entropy:")
ce = -np.log(ps)
iwl = iwl_point_value(ps, IwlConfig(beta=0.3))
for p, a, b in zip(ps, ce, iwl):
    print(f"  p={p:<5}  ce={a:7.4f}  iwl={b:7.4f}  ratio={b / a:5.2f}")

print("\nanalytical gradients vs central finite differences (100 trials each):")
for name in GRADCHECK_LOSSES:
    cfg = IwlConfig(beta=0.3) if name == "iwl" else BaselineLossConfig(kind=name)
    res = gradient_check(cfg, trials=100, seed=5)
    print(f"  {name:<15} max relative error {res.max_rel_error:.2e}  "
          f"{'pass' if res.passed else 'FAIL'}")
