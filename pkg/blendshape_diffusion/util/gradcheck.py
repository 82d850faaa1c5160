"""
Central finite-difference check of autograd gradients for custom training losses.
"""
import logging
import torch

logger = logging.getLogger(__name__)


def numerical_gradient(loss_fn, parameter, delta=1e-6):
    """
    Central finite differences of a scalar loss with respect to every entry of one parameter.

    :param loss_fn: callable with no arguments returning a scalar tensor
    :param parameter: the tensor that loss_fn reads; modified in place and restored
    :param delta: step size
    """
    gradient = torch.zeros_like(parameter)
    flat = parameter.data.view(-1)
    with torch.no_grad():
        for index in range(flat.numel()):
            original = flat[index].item()
            flat[index] = original + delta
            plus = loss_fn().item()
            flat[index] = original - delta
            minus = loss_fn().item()
            flat[index] = original
            gradient.view(-1)[index] = (plus - minus) / (2 * delta)
    return gradient


def relative_error(analytical, numerical, floor=1e-3):
    """Elementwise |a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from dominating"""
    scale = torch.maximum(torch.maximum(analytical.abs(), numerical.abs()), torch.full_like(analytical, floor))
    return (analytical - numerical).abs() / scale


def max_relative_gradient_error(loss_fn, named_parameters, delta=1e-6, floor=1e-3):
    """
    Compare autograd gradients with central finite differences for every named parameter.

    :param loss_fn: callable with no arguments returning a scalar tensor
    :param named_parameters: iterable of (name, parameter) pairs
    :return: (maximum relative error over all entries, dict of per-parameter maxima)
    """
    named_parameters = [(name, p) for name, p in named_parameters if p.requires_grad]
    for _, parameter in named_parameters:
        parameter.grad = None
    loss = loss_fn()
    loss.backward()
    errors = {}
    for name, parameter in named_parameters:
        analytical = parameter.grad.detach().clone() if parameter.grad is not None else torch.zeros_like(parameter)
        numerical = numerical_gradient(loss_fn, parameter, delta=delta)
        errors[name] = float(relative_error(analytical, numerical, floor=floor).max())
        logger.debug("%s: max relative error %.3e", name, errors[name])
    return max(errors.values()), errors
