"""Bi-level protected compressive sampling laboratory.

Sampling-as-encryption with a key-dependent sensing matrix and a
key-dependent sparsifying basis, the baseline product ciphers it improves
on, a chosen-plaintext attack harness, and a column-parallel image
sampling pipeline with its experiment suite.
"""

__version__ = "0.1.0"
