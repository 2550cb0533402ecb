"""Image-guided 3D affordance grounding and classification."""

__version__ = "0.1.0"
