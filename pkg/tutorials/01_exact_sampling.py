"""Compress a Gaussian sample into an index, then recover it from the index alone.

Encoder and decoder share a seed.  The encoder sees the private input x and
returns a positive integer K; the decoder regenerates the K-th proposal
sample.  The decoded value follows N(x, var_p) exactly, whatever the seed.
"""
import math

import numpy as np
from scipy import stats

from pprsim.intcodes import choose_lambda, elias_delta_length, zipf_shannon_length
from pprsim.ppr import GaussianProposal, GaussianRatio, PprParams, decode, encode, expected_logk_bound
from pprsim.rng import SeededStream

x, var_p, var_q = np.array([1.0]), 1.0, 4.0
proposal, ratio = GaussianProposal(1, var_q), GaussianRatio(x, var_p, var_q)
params = PprParams(alpha=2.0)

res = encode(params, proposal, ratio, shared_seed=7, local_stream=SeededStream(8))
print(f"index K = {res.k}; the decoder gets z = {decode(proposal, res.k, 7)[0]:.4f}")

ks, zs = [], []
for i in range(5000):
    r = encode(params, proposal, ratio, SeededStream(100, i), SeededStream(200, i))
    ks.append(r.k)
    zs.append(decode(proposal, r.k, SeededStream(100, i))[0])
ks = np.array(ks)
print(f"KS p-value against N(1, 1): {stats.kstest(zs, 'norm', args=(1.0, 1.0)).pvalue:.3f}")

kl = ratio.kl_bits()
mean_log = float(np.log2(ks).mean())
print(f"KL = {kl:.3f} bits, mean log2 K = {mean_log:.3f}, bound = {expected_logk_bound(2.0, kl):.3f}")

lam = choose_lambda(mean_log)
zipf = np.mean([zipf_shannon_length(int(k), lam) for k in ks])
delta = np.mean([elias_delta_length(int(k)) for k in ks])
print(f"mean codeword length: Zipf {zipf:.2f} bits, Elias delta {delta:.2f} bits")
