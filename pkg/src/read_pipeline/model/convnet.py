""" A small convolutional network with exact backpropagation.

Images are handled channels-last (N x H x W x C). Each block is a 3x3 stride-1 convolution with zero padding
of one pixel, a ReLU and a 2x2 max-pool. The last block is global-average pooled, mapped to the embedding by a
linear layer with a ReLU, and classified by a linear head followed by a softmax.
"""
import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from read_pipeline.common.constants import CHECKPOINT_MAGIC
from read_pipeline.common.exceptions import (CheckpointFormatError, InvalidAugmentation, InvalidConfiguration,
                                             NonFiniteInput, ShapeMismatch)

KERNEL = 3
POOL = 2
N_TRANSFORMS = 8


@dataclass(frozen=True)
class ConvNetSpec:
    input_size: int = 64
    channels: tuple = (8, 16, 32)
    embedding_dim: int = 32
    n_classes: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'channels', tuple(int(c) for c in self.channels))
        if not self.channels:
            raise InvalidConfiguration('convnet.channels', "at least one block is required")
        if self.input_size % (POOL ** len(self.channels)):
            raise InvalidConfiguration('convnet.input_size', "{} is not divisible by 2^{}".format(
                self.input_size, len(self.channels)))
        if self.embedding_dim <= 0:
            raise InvalidConfiguration('convnet.embedding_dim', "must be positive")
        if self.n_classes < 2:
            raise InvalidConfiguration('convnet.n_classes', "at least two classes are required")

    @property
    def n_blocks(self):
        return len(self.channels)

    def shapes(self):
        """ Parameter names and shapes, in checkpoint order. """
        shapes = OrderedDict()
        in_channels = 3
        for index, out_channels in enumerate(self.channels):
            shapes['conv{}.weight'.format(index)] = (out_channels, in_channels, KERNEL, KERNEL)
            shapes['conv{}.bias'.format(index)] = (out_channels,)
            in_channels = out_channels
        shapes['embed.weight'] = (in_channels, self.embedding_dim)
        shapes['embed.bias'] = (self.embedding_dim,)
        shapes['head.weight'] = (self.embedding_dim, self.n_classes)
        shapes['head.bias'] = (self.n_classes,)
        return shapes

    def to_dict(self):
        return {'input_size': self.input_size, 'channels': list(self.channels),
                'embedding_dim': self.embedding_dim, 'n_classes': self.n_classes}

    @classmethod
    def from_config(cls, config, n_classes=3):
        return cls(input_size=config.convnet.input_size, channels=tuple(config.convnet.channels),
                   embedding_dim=config.convnet.embedding_dim, n_classes=n_classes)


class ParamSet:
    """ Named parameter tensors. Operations return new sets and never modify arrays in place. """
    def __init__(self, tensors):
        self._tensors = OrderedDict((name, np.asarray(value, dtype=float)) for name, value in tensors.items())

    def __getitem__(self, name):
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __eq__(self, other):
        return (isinstance(other, ParamSet) and list(self) == list(other) and
                all(np.array_equal(self[name], other[name]) for name in self))

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    @property
    def size(self):
        """ Total number of scalar parameters. """
        return int(sum(value.size for value in self._tensors.values()))

    def shapes(self):
        return OrderedDict((name, value.shape) for name, value in self._tensors.items())

    def copy(self):
        return ParamSet(OrderedDict((name, value.copy()) for name, value in self._tensors.items()))

    def map(self, fn, *others):
        """ Apply fn elementwise across this set and other sets with the same layout. """
        for other in others:
            check_same_layout(self, other)
        return ParamSet(OrderedDict((name, fn(value, *[other[name] for other in others]))
                                    for name, value in self._tensors.items()))

    def zeros_like(self):
        return self.map(np.zeros_like)

    def is_finite(self):
        return all(np.all(np.isfinite(value)) for value in self._tensors.values())

    def flatten(self):
        return np.concatenate([value.ravel() for value in self._tensors.values()])


def check_same_layout(a, b):
    if a.shapes() != b.shapes():
        raise ShapeMismatch("Parameter set", dict(a.shapes()), dict(b.shapes()))


def init_params(spec, rng):
    """ Uniform +-sqrt(6 / fan_in) weights, zero biases and a zero classifier head.

    :param ConvNetSpec spec: The architecture.
    :param numpy.random.Generator rng: Seeded generator.
    :rtype: ParamSet
    """
    tensors = OrderedDict()
    for name, shape in spec.shapes().items():
        if name.endswith('.bias') or name.startswith('head.'):
            tensors[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if name.startswith('conv') else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ParamSet(tensors)


# layers

def conv2d_forward(x, weight, bias):
    """ 3x3 stride-1 convolution with one pixel of zero padding.

    :param numpy.ndarray x: N x H x W x C_in input.
    :param numpy.ndarray weight: C_out x C_in x 3 x 3 kernel.
    :param numpy.ndarray bias: C_out bias.
    :return: (N x H x W x C_out output, im2col matrix for the backward pass)
    """
    n, h, w, c = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # windows: N x H x W x C x 3 x 3
    cols = sliding_window_view(padded, (KERNEL, KERNEL), axis=(1, 2)).reshape(n * h * w, c * KERNEL * KERNEL)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    return out.reshape(n, h, w, weight.shape[0]), cols


def conv2d_backward(grad_out, cols, x_shape, weight):
    """ Gradients of conv2d_forward with respect to its input, kernel and bias. """
    n, h, w, c = x_shape
    out_channels = weight.shape[0]
    grad_flat = grad_out.reshape(-1, out_channels)
    grad_weight = (grad_flat.T @ cols).reshape(weight.shape)
    grad_bias = grad_flat.sum(axis=0)
    grad_cols = (grad_flat @ weight.reshape(out_channels, -1)).reshape(n, h, w, c, KERNEL, KERNEL)
    grad_padded = np.zeros((n, h + 2, w + 2, c))
    for i in range(KERNEL):
        for j in range(KERNEL):
            grad_padded[:, i:i + h, j:j + w, :] += grad_cols[..., i, j]
    return grad_padded[:, 1:-1, 1:-1, :], grad_weight, grad_bias


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(grad_out, mask):
    return grad_out * mask


def maxpool_forward(x):
    """ 2x2 max-pool; ties go to the first maximal element in row-major window order.

    :return: (pooled output, argmax index 0..3 of every window)
    """
    n, h, w, c = x.shape
    windows = x.reshape(n, h // POOL, POOL, w // POOL, POOL, c).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(n, h // POOL, w // POOL, c, POOL * POOL)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool_backward(grad_out, argmax):
    n, ph, pw, c = grad_out.shape
    grad_windows = np.zeros((n, ph, pw, c, POOL * POOL))
    np.put_along_axis(grad_windows, argmax[..., None], grad_out[..., None], axis=-1)
    grad_windows = grad_windows.reshape(n, ph, pw, c, POOL, POOL).transpose(0, 1, 4, 2, 5, 3)
    return grad_windows.reshape(n, ph * POOL, pw * POOL, c)


def global_average_forward(x):
    return x.mean(axis=(1, 2))


def global_average_backward(grad_out, x_shape):
    n, h, w, c = x_shape
    return np.broadcast_to(grad_out[:, None, None, :] / (h * w), x_shape).copy()


def linear_forward(x, weight, bias):
    return x @ weight + bias


def linear_backward(grad_out, x, weight):
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_backward(grad_probs, probs):
    """ Gradient with respect to the logits given the gradient with respect to softmax probabilities. """
    return probs * (grad_probs - (grad_probs * probs).sum(axis=1, keepdims=True))


# network

@dataclass
class ForwardResult:
    embeddings: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    cache: dict


class ConvNet:
    """ The network defined by a ConvNetSpec. """
    def __init__(self, spec):
        self.spec = spec

    def init_params(self, rng):
        return init_params(self.spec, rng)

    def check_batch(self, batch):
        batch = np.asarray(batch, dtype=float)
        expected = (self.spec.input_size, self.spec.input_size, 3)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeMismatch("Image batch", ('N',) + expected, batch.shape)
        return batch

    def forward(self, params, batch):
        """ Run the network on an N x H x W x 3 batch.

        :param ParamSet params: The parameters.
        :param numpy.ndarray batch: The images.
        :rtype: ForwardResult
        """
        if params.shapes() != OrderedDict(self.spec.shapes()):
            raise ShapeMismatch("Parameter set", dict(self.spec.shapes()), dict(params.shapes()))
        x = self.check_batch(batch)
        blocks = []
        for index in range(self.spec.n_blocks):
            pre, cols = conv2d_forward(x, params['conv{}.weight'.format(index)], params['conv{}.bias'.format(index)])
            activated, mask = relu_forward(pre)
            pooled, argmax = maxpool_forward(activated)
            blocks.append({'x_shape': x.shape, 'cols': cols, 'mask': mask, 'argmax': argmax})
            x = pooled
        pooled_shape = x.shape
        gap = global_average_forward(x)
        embed_pre = linear_forward(gap, params['embed.weight'], params['embed.bias'])
        embeddings, embed_mask = relu_forward(embed_pre)
        logits = linear_forward(embeddings, params['head.weight'], params['head.bias'])
        probs = softmax(logits)
        cache = {'blocks': blocks, 'pooled_shape': pooled_shape, 'gap': gap, 'embed_mask': embed_mask,
                 'embeddings': embeddings, 'probs': probs}
        return ForwardResult(embeddings=embeddings, logits=logits, probs=probs, cache=cache)

    def backward(self, params, cache, logits_grad):
        """ Gradients of a loss with respect to every parameter, given d(loss)/d(logits).

        :param ParamSet params: The parameters used by the cached forward pass.
        :param dict cache: ForwardResult.cache of that pass.
        :param numpy.ndarray logits_grad: N x C gradient.
        :rtype: ParamSet
        """
        grads = OrderedDict()
        grad_embeddings, grads['head.weight'], grads['head.bias'] = linear_backward(
            logits_grad, cache['embeddings'], params['head.weight'])
        grad_embed_pre = relu_backward(grad_embeddings, cache['embed_mask'])
        grad_gap, grads['embed.weight'], grads['embed.bias'] = linear_backward(
            grad_embed_pre, cache['gap'], params['embed.weight'])
        grad = global_average_backward(grad_gap, cache['pooled_shape'])
        for index in reversed(range(self.spec.n_blocks)):
            block = cache['blocks'][index]
            grad = maxpool_backward(grad, block['argmax'])
            grad = relu_backward(grad, block['mask'])
            grad, grads['conv{}.weight'.format(index)], grads['conv{}.bias'.format(index)] = conv2d_backward(
                grad, block['cols'], block['x_shape'], params['conv{}.weight'.format(index)])
        return ParamSet(OrderedDict((name, grads[name]) for name in self.spec.shapes()))

    def embed(self, params, batch, batch_size=64):
        """ Embeddings of a batch, computed in chunks. """
        batch = np.asarray(batch, dtype=float)
        chunks = [self.forward(params, batch[i:i + batch_size]).embeddings for i in range(0, len(batch), batch_size)]
        return np.vstack(chunks) if chunks else np.zeros((0, self.spec.embedding_dim))

    def predict_proba(self, params, batch, batch_size=64):
        batch = np.asarray(batch, dtype=float)
        chunks = [self.forward(params, batch[i:i + batch_size]).probs for i in range(0, len(batch), batch_size)]
        return np.vstack(chunks) if chunks else np.zeros((0, self.spec.n_classes))


def ema_update(teacher, student, alpha):
    """ teacher <- alpha * teacher + (1 - alpha) * student, elementwise.

    :rtype: ParamSet
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidConfiguration('ema_alpha', "{} is outside [0, 1]".format(alpha))
    return teacher.map(lambda t, s: alpha * t + (1.0 - alpha) * s, student)


def augment_pixels(pixels, transform_id):
    """ Apply one of the eight dihedral transforms to an H x W x C array (or N x H x W x C batch).

    Ids 0-3 rotate by 0, 90, 180 and 270 degrees; ids 4-7 do the same followed by a horizontal flip.
    """
    if not (isinstance(transform_id, (int, np.integer)) and 0 <= transform_id < N_TRANSFORMS):
        raise InvalidAugmentation(transform_id)
    axes = (0, 1) if pixels.ndim == 3 else (1, 2)
    out = np.rot90(pixels, k=int(transform_id) % 4, axes=axes)
    if transform_id >= 4:
        out = np.flip(out, axis=axes[1])
    return np.ascontiguousarray(out)


def augment(image, transform_id):
    """ Dihedral transform of a TileImage (a pixel permutation). """
    if image.pixels.shape[0] != image.pixels.shape[1]:
        raise ShapeMismatch("Tile image", "square", image.pixels.shape[:2])
    return type(image)(tile=image.tile, pixels=augment_pixels(image.pixels, transform_id),
                       standardized=image.standardized)


def augment_batch(batch, transform_ids):
    """ Transform every image of an N x H x W x 3 batch by its own id. """
    return np.stack([augment_pixels(image, int(transform_id)) for image, transform_id in zip(batch, transform_ids)])


class SGD:
    """ Stochastic gradient descent with classical momentum. """
    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = None

    def step(self, params, grads):
        if self.velocity is None:
            self.velocity = grads.zeros_like()
        self.velocity = self.velocity.map(lambda v, g: self.momentum * v + g, grads)
        updated = params.map(lambda p, v: p - self.lr * v, self.velocity)
        if not updated.is_finite():
            raise NonFiniteInput("Updated parameters")
        return updated


# checkpoints

def save_checkpoint(path, spec, params, meta=None):
    """ Write `READNET1`, a uint32 header length, a JSON header and the tensors as little-endian float32. """
    header = json.dumps({'spec': spec.to_dict(), 'tensors': [[name, list(shape)] for name, shape in
                                                             params.shapes().items()],
                         'meta': meta or {}}, sort_keys=True).encode('utf-8')
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack('<I', len(header)))
        f.write(header)
        for name in params:
            f.write(np.asarray(params[name], dtype='<f4').tobytes())
    logging.debug("Saved checkpoint {} ({} parameters)".format(path, params.size))


def load_checkpoint(path):
    """ Read a checkpoint.

    :return: (ConvNetSpec, ParamSet, metadata)
    :rtype: tuple
    """
    with open(path, 'rb') as f:
        payload = f.read()
    if payload[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(path, "bad magic bytes")
    offset = len(CHECKPOINT_MAGIC)
    try:
        (length,) = struct.unpack_from('<I', payload, offset)
        offset += 4
        header = json.loads(payload[offset:offset + length].decode('utf-8'))
        offset += length
        spec = ConvNetSpec(input_size=header['spec']['input_size'], channels=tuple(header['spec']['channels']),
                           embedding_dim=header['spec']['embedding_dim'], n_classes=header['spec']['n_classes'])
    except (struct.error, ValueError, KeyError) as e:
        raise CheckpointFormatError(path, "unreadable header ({})".format(e))
    tensors = OrderedDict()
    for name, shape in header['tensors']:
        count = int(np.prod(shape))
        if offset + 4 * count > len(payload):
            raise CheckpointFormatError(path, "tensor {} is truncated".format(name))
        tensors[name] = np.frombuffer(payload, dtype='<f4', count=count, offset=offset).astype(float).reshape(shape)
        offset += 4 * count
    params = ParamSet(tensors)
    if params.shapes() != OrderedDict(spec.shapes()):
        raise CheckpointFormatError(path, "tensor shapes do not match the stored architecture")
    return spec, params, header['meta']
