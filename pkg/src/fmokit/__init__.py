"""Detection, trajectory fitting and deblurring of fast moving objects."""
from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
