"""
Shared pytest setup.

Tests marked slow run the full-size acceptance checks (m=300 Betti
measurements, convergence benchmark, fashion-MNIST pruning); deselect them
with `pytest -m "not slow"`.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance check")
