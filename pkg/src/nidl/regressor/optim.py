import numpy as np


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype)


class SGDMomentum:
    def __init__(self, params, lr=1e-3, momentum=0.9):
        self.params = params
        self.lr, self.momentum = lr, momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        for k, p in self.params.items():
            vel = self.velocity[k]
            vel *= self.momentum
            vel -= self.lr * grads[k]
            p += vel


def make_optimizer(name, params, lr, momentum=0.9):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd-momentum":
        return SGDMomentum(params, lr=lr, momentum=momentum)
    raise ValueError(f"unknown optimizer {name!r}")
