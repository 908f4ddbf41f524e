"""One-shot coding over small networks: exact bounds next to simulated error rates.

Every preset ships with a textbook closed form of its bound; the generic
evaluator should reproduce it, and the simulated failure rate should sit
below it.
"""
from pprsim import adn

for name, p in adn.reference_presets().items():
    joint = p.joint()
    bound = adn.bound_total(p.net, p.spec, p.error, joint=joint)
    res = adn.run_scheme(p.net, p.spec, p.error, master_seed=1, trials=5000, joint=joint)
    print(f"{name:16s} bound {bound:.4f} (closed form {p.corollary(joint):.4f})  "
          f"error {res.error_rate:.4f}  failure {res.failure_rate:.4f} +- {res.failure_stderr:.4f}")
