"""Moreau envelopes on closed-form model manifolds, with sampled property checks.

Modules: ``manifolds`` (model geometries), ``fields`` (test functions and
convex sets), ``envelope`` (the solver), ``verification`` (checks and
reports), ``applications`` (set distances, the sphere search, Hopf-Lax) and
``cli`` (the ``riemoreau`` command).
"""

__version__ = "0.1.0"
