"""p-adic L-functions of Eisenstein-congruent eigenforms via modular symbols."""

__version__ = "0.1.0"
