"""
Test suite for kicked_cgl package.
"""
