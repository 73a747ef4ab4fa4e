"""
Services package: geometry, meshing, finite elements and shape calculus.
"""
