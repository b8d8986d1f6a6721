"""Learning the coarse-to-fine downscaling operator of multiscale elliptic problems."""

__version__ = "0.1.0"
