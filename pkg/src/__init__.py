"""Atlas-prior graph-cut segmentation of the left ventricle in cardiac cine volumes."""
__version__ = "0.1.0"
