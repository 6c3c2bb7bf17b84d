"""
Test package for penetration_depth.
"""
