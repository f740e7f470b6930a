"""
Test package for hybrid-ddp.

This package contains unit tests for the solver, the contact models,
the planner, the simulation harness and the command line interface.
"""
