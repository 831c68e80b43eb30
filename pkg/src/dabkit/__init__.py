"""Compressed dynamic augmented B-trees with three bits of redundancy.

Modules:

    vmem       virtual memories and the chunked physical store
    adapter    two-way adapters (bit-reversal consistent-hashing bijections)
    spillover  small-set code, perturbation and fusion code
    dabtree    table precomputation, encoding, queries and updates
    apps       dynamic rank/select dictionary and dynamic arithmetic coding
    oracle     brute-force references used by the test-suite
    cli        batch harness
"""

__version__ = "0.1.0"
