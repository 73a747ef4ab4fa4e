"""
Command-line front ends.
"""
