"""Hospital admissions forecasting: penalized-spline growth models, leading
indicator regressions, sample-based prediction intervals, ensembles, and a
rolling weekly backtest harness."""

__version__ = "0.1.0"
