"""scancast: selective-scan radar nowcasting on synthetic radar fields.

A hybrid state-space / attention encoder-decoder forecaster, classical
extrapolation baselines, categorical forecast verification, and a seeded
synthetic radar world to exercise all of it, built on a small float64
autodiff core.
"""

__version__ = "0.1.0"

_ESTIMATORS = ("ScanCastForecaster", "PersistenceForecaster", "OpticalFlowForecaster")

__all__ = list(_ESTIMATORS)


def __getattr__(name):
    if name in _ESTIMATORS:
        from . import forecasters

        return getattr(forecasters, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
