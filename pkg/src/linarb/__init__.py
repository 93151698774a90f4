"""Linear-forest decompositions from list edge colourings with twin colours."""

__version__ = "0.1.0"
