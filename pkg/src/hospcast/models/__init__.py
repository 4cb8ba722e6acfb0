"""Forecasting model structures built on the fitting engine."""
