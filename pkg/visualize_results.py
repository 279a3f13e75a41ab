#!/usr/bin/env python3
"""
Visualization of Experiment Results

Renders the outputs of a topobetti run directory into one PDF:
1. Betti numbers per layer (layer-betti)
2. Epochs to threshold per activation (benchmark)
3. Filter Betti totals (prune)
4. Training curve (train)

Usage:
    python visualize_results.py --input results/rings --output results/rings/plots.pdf
"""

import argparse
import logging
import os
import sys

from topobetti.plots import create_plots

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Visualize topobetti experiment results")
    parser.add_argument("--input", required=True, help="Results directory written by a topobetti command")
    parser.add_argument("--output", default=None, help="Path to save visualizations PDF (default: <input>/plots.pdf)")

    args = parser.parse_args()

    if not os.path.isdir(args.input):
        logger.error(f"Results directory not found: {args.input}")
        sys.exit(1)
    output = args.output or os.path.join(args.input, "plots.pdf")
    if not create_plots(args.input, output):
        sys.exit(1)


if __name__ == "__main__":
    main()
