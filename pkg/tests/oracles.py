"""Frozen reference values with their closed forms.

Each value is written once as an explicit formula evaluated with ``math``
only, so it does not depend on the quadrature or simulation code it checks.
"""

from __future__ import annotations

import math

e = math.exp

# kernel model, uniform(0, 10) delay in l0; on [4, 7] both jumps with 0.7 / 0.3
FIG2B_E1 = 0.3 * 0.7 + 0.3          # (7, 10] only e1, [4, 7] weight 0.7
FIG2B_E2 = 0.1 + 0.3 * 0.3          # [3, 4) only e2, [4, 7] weight 0.3
FIG2B_EPS = 0.3                     # [0, 3) nothing enabled
# two uniform draws staying below 3 in total: integral_0^3 (3 - t) / 100 dt
FIG2B_EPS_EPS = 0.045
# three draws with sum below 3: 3^3 / (6 * 10^3); four: 3^4 / (24 * 10^4)
FIG2B_EPS_RUN = (0.3, 0.045, 27 / 6000, 81 / 240000)
# after e1 the rate-2 location has only its resampling loop
FIG2B_E1_EPS = FIG2B_E1
# resample at t in [0, 3), then a second draw u: t + u in [4, 7] takes e1 with 0.7,
# t + u > 7 takes it surely; int_0^3 (1/10) (0.3 * 0.7 + (3 + t) / 10) dt
FIG2B_EPS_E1 = 0.1 * (0.21 * 3 + (9 + 4.5) / 10)

# race model, X1 = X2 = exp(0.2); e1 needs x >= 4, e2 needs x in [3, 7]
FIG2C_E1 = 0.5 * e(-1.6)
FIG2C_E2 = 0.5 * (e(-1.2) - e(-2.8))
FIG2C_EPS1 = 0.5 * (1 - e(-1.6))
FIG2C_EPS2 = 0.5 * (1 - e(-1.2)) + 0.5 * e(-2.8)
# from x = s < 4 the next race ends with e1 with probability 0.5 e^{-0.4 (4 - s)}
FIG2C_EPS1_E1 = 0.4 * e(-1.6)
FIG2C_EPS2_E2 = 0.3 * (e(-1.2) - e(-2.8))
FIG2C_E1_EPS1 = 0.5 * FIG2C_E1
FIG2C_EXP_PAIR_WIN = (0.25, 0.75)

# minimum of two uniform(0, 10) draws: F(m) = 1 - (1 - m/10)^2
UNIFORM_PAIR_RATIO = 2.0
UNIFORM_PAIR_KS = 0.25
# exp(0.4) against uniform(0, 10): sup of |1 - e^{-0.4 t} - t / 10| at t = ln(4) / 0.4
EXP04_VS_U010 = 1 - 0.25 - math.log(4) / 4
# exp(1) pair against uniform(0, 1): sup at t = ln(2) / 2
EXP_PAIR_VS_U01 = 1 - 0.5 - math.log(2) / 2
