"""
topobetti: Betti numbers of point clouds and of the data flowing through
neural networks, a many-to-one stacked-sine activation, and Betti-guided
convolution filter pruning.
"""

__version__ = "0.1.0"
