"""Private mean estimation with compressed Gaussian noise, against coordinate subsampling.

A reduced workload (100 clients, 200 dimensions, 20 trials) keeps this
under a minute.  Pass --full for the 500 x 1000 setting at the two
headline operating points; that takes several minutes per point.
"""
import sys

from pprsim.dme_cli import DmeConfig, run_csgm_dme, run_ppr_dme

full = "--full" in sys.argv
shape = dict(n=500, d=1000, trials=50) if full else dict(n=100, d=200, trials=20)

for eps, bits in ((1.0, 50), (0.5, 25)):
    ppr = run_ppr_dme(DmeConfig(eps=eps, bit_budget=bits, **shape))
    csgm = run_csgm_dme(DmeConfig(eps=eps, bit_budget=bits, mechanism="csgm", **shape))
    print(f"eps={eps} budget={bits} bits")
    print(f"  PPR : MSE {ppr.mse:.5f} +- {ppr.mse_stderr:.5f} (Gaussian {ppr.extra['mse_gaussian']:.5f}), "
          f"eps'={ppr.eps_used:.3f}, local eps {ppr.local_eps:.2f}")
    print(f"  CSGM: MSE {csgm.mse:.5f} +- {csgm.mse_stderr:.5f}, central only")
