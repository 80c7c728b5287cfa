"""Dense/GRU building blocks, Adam, and the tensor checkpoint container."""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor, concat

CHECKPOINT_VERSION = 1


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x saturates to the correct limit of 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def fan_in_uniform(rng, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 1.0
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    def parameters(self) -> list:
        out = []
        for v in vars(self).values():
            if isinstance(v, Tensor) and v.requires_grad:
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append(item)
        return out

    def state_arrays(self) -> list:
        return [p.data for p in self.parameters()]

    def load_arrays(self, arrays):
        params = self.parameters()
        if len(arrays) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            if p.data.shape != a.shape:
                raise ValueError(f"shape mismatch: {p.data.shape} vs {a.shape}")
            p.data = np.asarray(a, dtype=np.float64).copy()

    def copy_from(self, other: "Module"):
        self.load_arrays(other.state_arrays())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng):
        self.w = fan_in_uniform(rng, n_in, (n_in, n_out))
        self.b = fan_in_uniform(rng, n_in, (n_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Mlp(Module):
    """Affine + ReLU stack with a linear output layer."""

    def __init__(self, sizes, rng):
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("need at least input and output widths, all >= 1")
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes, sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x).relu()
        return self.layers[-1](x)

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        """Gradient-free forward pass for target networks and rollouts."""
        for layer in self.layers[:-1]:
            x = np.maximum(x @ layer.w.data + layer.b.data, 0.0)
        last = self.layers[-1]
        return x @ last.w.data + last.b.data


class GruCell(Module):
    """Update gate z, reset gate r, candidate h~; h' = (1-z)*h + z*h~."""

    def __init__(self, n_in: int, n_hidden: int, rng):
        self.n_hidden = n_hidden
        self.wz = fan_in_uniform(rng, n_in, (n_in, n_hidden))
        self.uz = fan_in_uniform(rng, n_hidden, (n_hidden, n_hidden))
        self.bz = fan_in_uniform(rng, n_in, (n_hidden,))
        self.wr = fan_in_uniform(rng, n_in, (n_in, n_hidden))
        self.ur = fan_in_uniform(rng, n_hidden, (n_hidden, n_hidden))
        self.br = fan_in_uniform(rng, n_in, (n_hidden,))
        self.wh = fan_in_uniform(rng, n_in, (n_in, n_hidden))
        self.uh = fan_in_uniform(rng, n_hidden, (n_hidden, n_hidden))
        self.bh = fan_in_uniform(rng, n_in, (n_hidden,))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        z = (x @ self.wz + h @ self.uz + self.bz).sigmoid()
        r = (x @ self.wr + h @ self.ur + self.br).sigmoid()
        cand = (x @ self.wh + (r * h) @ self.uh + self.bh).tanh()
        return (1.0 - z) * h + z * cand

    def sequence(self, xs: np.ndarray) -> Tensor:
        """Unroll over (T, batch, n_in) inputs from a zero initial state.

        Returns the stacked hidden states as one (T*batch, n_hidden) tensor
        backed by a single hand-written backward-through-time closure. This is
        far cheaper than building the per-step graph when T is large; inputs
        are treated as constants (no gradient flows into xs)."""
        T, batch, _ = xs.shape
        H = self.n_hidden
        wz, uz, bz = self.wz, self.uz, self.bz
        wr, ur, br = self.wr, self.ur, self.br
        wh, uh, bh = self.wh, self.uh, self.bh
        zs = np.empty((T, batch, H))
        rs = np.empty((T, batch, H))
        cs = np.empty((T, batch, H))
        hs = np.empty((T, batch, H))
        h = np.zeros((batch, H))
        xw_z = xs @ wz.data + bz.data
        xw_r = xs @ wr.data + br.data
        xw_h = xs @ wh.data + bh.data
        for t in range(T):
            z = _sigmoid_np(xw_z[t] + h @ uz.data)
            r = _sigmoid_np(xw_r[t] + h @ ur.data)
            c = np.tanh(xw_h[t] + (r * h) @ uh.data)
            zs[t], rs[t], cs[t] = z, r, c
            h = (1.0 - z) * h + z * c
            hs[t] = h

        def bw(g):
            g = g.reshape(T, batch, H)
            dwz = np.zeros_like(wz.data)
            duz = np.zeros_like(uz.data)
            dbz = np.zeros_like(bz.data)
            dwr = np.zeros_like(wr.data)
            dur = np.zeros_like(ur.data)
            dbr = np.zeros_like(br.data)
            dwh = np.zeros_like(wh.data)
            duh = np.zeros_like(uh.data)
            dbh = np.zeros_like(bh.data)
            dh = np.zeros((batch, H))
            for t in range(T - 1, -1, -1):
                dh = dh + g[t]
                z, r, c = zs[t], rs[t], cs[t]
                h_prev = hs[t - 1] if t > 0 else np.zeros((batch, H))
                dz_pre = dh * (c - h_prev) * z * (1.0 - z)
                dc_pre = dh * z * (1.0 - c * c)
                dh_next = dh * (1.0 - z)
                drh = dc_pre @ uh.data.T
                dr_pre = drh * h_prev * r * (1.0 - r)
                dh_next = dh_next + drh * r
                dh_next = dh_next + dz_pre @ uz.data.T + dr_pre @ ur.data.T
                x = xs[t]
                dwz += x.T @ dz_pre
                duz += h_prev.T @ dz_pre
                dbz += dz_pre.sum(axis=0)
                dwr += x.T @ dr_pre
                dur += h_prev.T @ dr_pre
                dbr += dr_pre.sum(axis=0)
                dwh += x.T @ dc_pre
                duh += (r * h_prev).T @ dc_pre
                dbh += dc_pre.sum(axis=0)
                dh = dh_next
            wz._accum(dwz), uz._accum(duz), bz._accum(dbz)
            wr._accum(dwr), ur._accum(dur), br._accum(dbr)
            wh._accum(dwh), uh._accum(duh), bh._accum(dbh)

        return Tensor(
            hs.reshape(T * batch, H),
            _parents=(wz, uz, bz, wr, ur, br, wh, uh, bh),
            _backward=bw,
        )

    def step_numpy(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Gradient-free recurrence step."""
        z = _sigmoid_np(x @ self.wz.data + h @ self.uz.data + self.bz.data)
        r = _sigmoid_np(x @ self.wr.data + h @ self.ur.data + self.br.data)
        cand = np.tanh(x @ self.wh.data + (r * h) @ self.uh.data + self.bh.data)
        return (1.0 - z) * h + z * cand

    def sequence_numpy(self, xs: np.ndarray) -> np.ndarray:
        """Gradient-free unroll from a zero state; returns (T, batch, n_hidden)."""
        T, batch, _ = xs.shape
        hs = np.empty((T, batch, self.n_hidden))
        h = np.zeros((batch, self.n_hidden))
        xw_z = xs @ self.wz.data + self.bz.data
        xw_r = xs @ self.wr.data + self.br.data
        xw_h = xs @ self.wh.data + self.bh.data
        for t in range(T):
            z = _sigmoid_np(xw_z[t] + h @ self.uz.data)
            r = _sigmoid_np(xw_r[t] + h @ self.ur.data)
            c = np.tanh(xw_h[t] + (r * h) @ self.uh.data)
            h = (1.0 - z) * h + z * c
            hs[t] = h
        return hs

    def initial_state(self, batch: int = 1) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)))


class GruMlp(Module):
    """GRU encoder followed by an MLP head; the recurrent agent trunk."""

    def __init__(self, n_in: int, n_hidden: int, head_sizes, rng):
        self.gru = GruCell(n_in, n_hidden, rng)
        self.head = Mlp([n_hidden, *head_sizes], rng)

    def __call__(self, x: Tensor, h: Tensor) -> tuple:
        h_next = self.gru(x, h)
        return self.head(h_next), h_next

    def forward_numpy(self, x: np.ndarray, h: np.ndarray) -> tuple:
        h_next = self.gru.step_numpy(x, h)
        return self.head.forward_numpy(h_next), h_next

    def initial_state(self, batch: int = 1) -> Tensor:
        return self.gru.initial_state(batch)


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            m, v = self.m[i], self.v[i]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * np.square(g)
            p.data = p.data - (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(path, arrays: dict, meta: dict | None = None):
    """Named-tensor container: npz with a versioned JSON header."""
    header = json.dumps({"version": CHECKPOINT_VERSION, "meta": meta or {}})
    np.savez(path, __header__=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        arrays = {k: data[k] for k in data.files if k != "__header__"}
    return arrays, header["meta"]
