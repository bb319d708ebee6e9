"""CNN-dispatched autoregressive channel prediction for RIS-assisted MIMO under channel aging."""

__version__ = "0.1.0"
