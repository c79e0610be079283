"""Bi-level contextual bandit simulator for constrained resource allocation
under delayed feedback: delay kernels, outcome models, the allocation
environment, baseline policies, the bi-level meta/base policy, metrics, and
an experiment runner with CSV reports.
"""

__version__ = "0.1.0"
