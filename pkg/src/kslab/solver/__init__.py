"""Finite-volume grid, operators, linear solves and time stepping.

Import from the submodules (``grid``, ``operators``, ``linalg``,
``scheme``); this package namespace stays empty to avoid import cycles
with :mod:`kslab.model`.
"""
