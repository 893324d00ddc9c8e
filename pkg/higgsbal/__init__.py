"""Higgsbal: balanced metrics for twisted Higgs bundles on the projective line."""
