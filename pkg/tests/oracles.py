"""Independent reference implementations used only by the tests.

Everything here evaluates the adversary model literally — per compromise
subset, per attack-success branch, per slot — with no shared code with the
package's coefficient machinery.
"""

import itertools

import numpy as np


def brute_joint_pmf(cfg, pB, qB):
    """(p, q) over all outcomes by direct enumeration of every branch."""
    K, N, L = cfg.alphabet_size, cfg.num_devices, cfg.chain_length
    alpha, ps = cfg.compromise_prob, cfg.dsa_success_prob
    la = max(cfg.attack_start, 1)
    l0 = cfg.honest_prefix
    num = K ** (N * L)
    out = []
    for honest, attacker in ((np.asarray(cfg.honest_pmf_h1, float), np.asarray(pB, float)),
                             (np.asarray(cfg.honest_pmf_h0, float), np.asarray(qB, float))):
        dist = np.zeros(num)
        for i in range(num):
            digits = np.array(list(np.base_repr(i, K).zfill(N * L)), dtype=int)
            R = digits.reshape(N, L)
            total = 0.0
            for flags in itertools.product((0, 1), repeat=N):
                w_flags = np.prod([alpha if f else 1.0 - alpha for f in flags])
                for success, w_branch in ((True, ps), (False, 1.0 - ps)):
                    term = w_flags * w_branch
                    for j in range(N):
                        for l in range(1, L + 1):
                            sym = R[j, l - 1]
                            falsified = flags[j] and (l > l0 or (success and l >= la))
                            term *= attacker[sym] if falsified else honest[sym]
                    total += term
            dist[i] = total
        out.append(dist)
    return out[0], out[1]


def brute_kld(cfg, pB, qB):
    p, q = brute_joint_pmf(cfg, pB, qB)
    pos = q > 0.0
    if np.any(p[pos] == 0.0):
        return float("inf")
    return float(np.sum(q[pos] * np.log(q[pos] / p[pos])))
