"""Numerical core: geometry of the projective line, section spaces, balancing and weights."""
