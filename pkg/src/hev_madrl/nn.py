"""Dense networks with exact backpropagation, Adam, and target soft updates.

All parameters of a network live in one flat float64 vector; per-layer
weights and biases are views into it. Optimizer moments and soft updates
then act on the whole vector at once.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch

CHECKPOINT_MAGIC = "hev-madrl-dense/1"
FLUSH_BELOW = 1e-100


class DenseNetwork:
    """ReLU hidden layers, ``tanh`` or linear output.

    ``layer_sizes`` lists widths from input to output, so a network with
    ``len(layer_sizes) - 1`` dense layers.
    """

    def __init__(self, layer_sizes, output: str = "linear", rng=None, final_init: float = 3e-3):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeMismatch(f"invalid layer sizes {sizes}")
        if output not in ("linear", "tanh"):
            raise ValueError(f"output activation must be 'linear' or 'tanh', got {output!r}")
        self.layer_sizes = sizes
        self.output = output
        total = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        self.params = np.zeros(total)
        self._weight_mask = np.zeros(total)
        self._bind_views()
        if rng is not None:
            self.initialize(rng, final_init)

    def _bind_views(self):
        self.weights, self.biases = [], []
        pos = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            self._weight_mask[pos:pos + fan_in * fan_out] = 1.0
            pos += fan_in * fan_out
            b = self.params[pos:pos + fan_out]
            pos += fan_out
            self.weights.append(w)
            self.biases.append(b)

    def initialize(self, rng, final_init: float = 3e-3) -> None:
        """Fan-in uniform init; the last layer is drawn from a narrow band."""
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            bound = final_init if k == last else 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def weight_mask(self) -> np.ndarray:
        return self._weight_mask

    def copy(self) -> "DenseNetwork":
        other = DenseNetwork(self.layer_sizes, self.output)
        other.params[:] = self.params
        return other

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ShapeMismatch(f"expected input width {self.layer_sizes[0]}, got shape {np.shape(x)}")
        return x, single

    def forward(self, x) -> np.ndarray:
        h, single = self._check(x)
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        if self.output == "tanh":
            h = np.tanh(h)
        return h[0] if single else h

    __call__ = forward

    def forward_cache(self, x):
        """Batched forward pass that keeps what ``backward`` needs."""
        h, _ = self._check(x)
        inputs = []
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        if self.output == "tanh":
            h = np.tanh(h)
        return h, (inputs, h)

    def backward(self, cache, grad_out, param_grads: bool = True):
        """Returns ``(flat parameter gradient or None, gradient w.r.t. input)``."""
        inputs, out = cache
        g = np.asarray(grad_out, dtype=float)
        if self.output == "tanh":
            g = g * (1.0 - out * out)
        grad = np.empty_like(self.params) if param_grads else None
        gw_views = _views_like(grad, self.layer_sizes) if param_grads else None
        for k in range(self.n_layers - 1, -1, -1):
            h_in = inputs[k]
            if param_grads:
                gw, gb = gw_views[k]
                np.matmul(h_in.T, g, out=gw)
                gb[...] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                # h_in is the ReLU output of layer k-1
                g = g * (h_in > 0.0)
        return grad, g


def _views_like(flat, sizes):
    views = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        views.append((w, b))
    return views


def mlp_sizes(n_in: int, n_out: int, layers: int, width: int = 64) -> list[int]:
    """Widths for a network with ``layers`` dense layers."""
    if layers < 1:
        raise ValueError("need at least one layer")
    return [n_in] + [width] * (layers - 1) + [n_out]


# ---------------------------------------------------------------------------
# losses and gradients


def l2_penalty(net: DenseNetwork, l2: float) -> float:
    return 0.5 * l2 * float(np.dot(net.params * net.weight_mask, net.params))


def critic_loss_and_grad(critic: DenseNetwork, states, actions, targets, l2: float = 0.0):
    """Mean squared TD error plus ``l2/2 * sum(W**2)``."""
    states = np.atleast_2d(states)
    actions = np.atleast_2d(actions)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if len(targets) == 0:
        raise ValueError("empty batch")
    q, cache = critic.forward_cache(np.hstack([states, actions]))
    err = q[:, 0] - targets
    loss = float(np.mean(err * err)) + l2_penalty(critic, l2)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"critic loss is {loss}")
    grad, _ = critic.backward(cache, (2.0 / len(err)) * err[:, None])
    if l2:
        grad += l2 * critic.weight_mask * critic.params
    return loss, grad


def actor_objective_and_grad(actor: DenseNetwork, critic: DenseNetwork, states, l2: float = 0.0):
    """Objective ``-mean Q(s, pi(s)) + l2/2 * sum(W**2)`` and its actor gradient.

    The chain runs through the critic's action input into the actor.
    """
    states = np.atleast_2d(states)
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    a, acache = actor.forward_cache(states)
    q, ccache = critic.forward_cache(np.hstack([states, a]))
    objective = -float(np.mean(q)) + l2_penalty(actor, l2)
    if not np.isfinite(objective):
        raise NonFiniteLoss(f"actor objective is {objective}")
    _, gx = critic.backward(ccache, np.full((n, 1), -1.0 / n), param_grads=False)
    grad, _ = actor.backward(acache, gx[:, states.shape[1]:])
    if l2:
        grad += l2 * actor.weight_mask * actor.params
    return objective, grad


# ---------------------------------------------------------------------------
# optimizer and target tracking


class Adam:
    """Adaptive moments with bias correction.

    ``weight_decay`` adds ``weight_decay * params`` to the gradient before the
    moment update (coupled L2); leave it at 0 when the loss already carries
    the penalty.
    """

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if params.shape != grad.shape or params.shape != self.m.shape:
            raise ShapeMismatch("parameter, gradient and moment shapes differ")
        if self.weight_decay:
            grad = grad + self.weight_decay * params
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        # weights decayed by the L2 term drift toward subnormal magnitudes,
        # where float arithmetic is orders of magnitude slower
        for arr in (params, self.m):
            arr[np.abs(arr) < FLUSH_BELOW] = 0.0

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "weight_decay": self.weight_decay, "t": self.t, "m": self.m.copy(), "v": self.v.copy()}

    def load_state_dict(self, state: dict) -> None:
        for key in ("lr", "beta1", "beta2", "eps", "weight_decay", "t"):
            setattr(self, key, state[key])
        self.m = np.array(state["m"], dtype=float)
        self.v = np.array(state["v"], dtype=float)


def apply_update(net: DenseNetwork, optimizer: Adam, grad: np.ndarray) -> DenseNetwork:
    optimizer.step(net.params, grad)
    return net


def soft_update(target: DenseNetwork, online: DenseNetwork, tau: float) -> DenseNetwork:
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if target.layer_sizes != online.layer_sizes:
        raise ShapeMismatch("target and online architectures differ")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if tau == 1.0:
        target.params[:] = online.params
    elif tau:
        target.params += tau * (online.params - target.params)
    return target


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then little-endian float64 parameters


def save_network(net: DenseNetwork, path) -> None:
    header = {"format": CHECKPOINT_MAGIC, "layer_sizes": list(net.layer_sizes),
              "output": net.output, "n_params": net.n_params, "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(net.params.astype("<f8").tobytes())


def load_network(path) -> DenseNetwork:
    raw = Path(path).read_bytes()
    line, _, body = raw.partition(b"\n")
    header = json.loads(line)
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a dense-network checkpoint")
    net = DenseNetwork(header["layer_sizes"], header["output"])
    values = np.frombuffer(body, dtype="<f8")
    if values.size != net.n_params:
        raise ShapeMismatch(f"{path}: expected {net.n_params} parameters, found {values.size}")
    net.params[:] = values
    return net
