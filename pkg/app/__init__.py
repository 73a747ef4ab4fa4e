"""Bernoulli free boundary solver: Bezier shape optimization with P1 finite elements"""
