"""
Benchmarking scripts for the kicked_cgl package.
"""
