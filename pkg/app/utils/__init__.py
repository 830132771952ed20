from app.utils.linalg import ball_samples, kernel_residual, tensor_product
from app.utils.smooth import smooth_step, smooth_step_derivative, smooth_step_integral

__all__ = [
    "tensor_product",
    "kernel_residual",
    "ball_samples",
    "smooth_step",
    "smooth_step_derivative",
    "smooth_step_integral",
]
