"""Covering numbers, information hiding and a compound wiretap code on tiny alphabets."""
import numpy as np

from pprsim import secrecy

rng = np.random.default_rng(0)
chans = [rng.dirichlet(np.ones(2), size=2).T for _ in range(100)]
cover = secrecy.greedy_cover(chans, 0.25)
print(f"greedy 0.25-cover of 100 random binary channels: {len(cover)} members "
      f"(worst case {secrecy.covering_bound(2, 2, 0.25):.1f})")

spec = secrecy.random_hiding_instance(3)
for a, ch in enumerate(spec.attacks.channels):
    rate, se = secrecy.hiding_run(spec, a, 20000, seed=1)
    print(f"hiding, attack {a}: failure {rate:.4f} +- {se:.4f} <= {secrecy.hiding_expectation(spec, ch):.4f}")

wt = secrecy.random_wiretap_instance(5, A=4, B=2, size=32)
pe, se, tv, tse = secrecy.wiretap_run(wt, (0, 0), 20000, seed=2)
print(f"wiretap: error {pe:.4f} (term {secrecy.wiretap_error_term(wt, wt.decoders[0]):.4f}), "
      f"TV {tv:.4f} (term {secrecy.wiretap_secrecy_term(wt, wt.eavesdroppers[0]):.4f})")
