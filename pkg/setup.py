"""Setup script for kicked-cgl.

Configuration lives in pyproject.toml; this shim supports legacy editable installs.
"""
from setuptools import setup

setup()
