"""
Test suite for the anchordiff package.
"""
