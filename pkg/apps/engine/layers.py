"""
Forward and backward kernels for the supported layer kinds.

Activations are NCHW for convolution and pooling and (N, features) for dense layers.
All kernels work in float64.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dense_forward(x: np.ndarray, weights: np.ndarray, bias) -> np.ndarray:
    out = x @ weights.T
    return out + bias if bias is not None else out


def dense_backward(grad: np.ndarray, x: np.ndarray, weights: np.ndarray):
    """Return (dx, dW, db)."""
    return grad @ weights, grad.T @ x, grad.sum(axis=0)


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int):
    """
    Unfold (N, C, H, W) into a (N*OH*OW, C*k*k) patch matrix.

    Returns the matrix and (OH, OW).
    """
    windows = sliding_window_view(_pad(x, padding), (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    n, c, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kernel * kernel)
    return cols, (oh, ow)


def col2im(dcols: np.ndarray, x_shape, kernel: int, stride: int, padding: int, out_hw) -> np.ndarray:
    """Fold patch gradients back onto the (unpadded) input, summing overlaps."""
    n, c, h, w = x_shape
    oh, ow = out_hw
    patches = dcols.reshape(n, oh, ow, c, kernel, kernel)
    dx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias, stride: int, padding: int):
    """Return the output and the patch matrix needed by the backward pass."""
    out_channels, _, kernel, _ = weights.shape
    cols, (oh, ow) = im2col(x, kernel, stride, padding)
    out = cols @ weights.reshape(out_channels, -1).T
    if bias is not None:
        out = out + bias
    out = out.reshape(x.shape[0], oh, ow, out_channels).transpose(0, 3, 1, 2)
    return out, cols


def conv2d_backward(grad: np.ndarray, cols: np.ndarray, x_shape, weights: np.ndarray, stride: int, padding: int):
    """Return (dx, dW, db)."""
    out_channels, _, kernel, _ = weights.shape
    oh, ow = grad.shape[2], grad.shape[3]
    flat = grad.transpose(0, 2, 3, 1).reshape(-1, out_channels)
    dweights = (flat.T @ cols).reshape(weights.shape)
    dbias = flat.sum(axis=0)
    dcols = flat @ weights.reshape(out_channels, -1)
    return col2im(dcols, x_shape, kernel, stride, padding, (oh, ow)), dweights, dbias


def maxpool_forward(x: np.ndarray, kernel: int, stride: int):
    """Return the pooled output and the flat argmax inside every window."""
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = windows.reshape(*windows.shape[:4], kernel * kernel)
    argmax = flat.argmax(axis=-1)
    return np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0], argmax


def maxpool_backward(grad: np.ndarray, argmax: np.ndarray, x_shape, kernel: int, stride: int) -> np.ndarray:
    n, c, oh, ow = grad.shape
    di, dj = np.divmod(argmax, kernel)
    rows = np.arange(oh)[None, None, :, None] * stride + di
    cols = np.arange(ow)[None, None, None, :] * stride + dj
    batch = np.broadcast_to(np.arange(n)[:, None, None, None], grad.shape)
    chan = np.broadcast_to(np.arange(c)[None, :, None, None], grad.shape)
    dx = np.zeros(x_shape, dtype=grad.dtype)
    np.add.at(dx, (batch, chan, rows, cols), grad)
    return dx


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad * (x > 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_backward(grad: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (grad - np.sum(grad * probs, axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
