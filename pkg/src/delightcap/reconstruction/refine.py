"""Regularised albedo refinement under the fitted SH lighting.

Objective over the texture T (R x R x 3)::

    E(T) = mean_obs |(S T) * shade - raw|^2
         + mu_prox * mean_texels |T - T0|^2
         + mu_tv * mean sqrt(dx(T)^2 + dy(T)^2 + delta^2)

where S bilinearly samples the texture at every observed pixel and ``shade``
is the SH irradiance at that pixel's normal.  Minimised by diagonally
preconditioned gradient descent with Armijo backtracking.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import sparse

from .fusion import UVTexture
from .lighting import observe_views

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class RefineConfig:
    mu_prox: float = 0.05
    mu_tv: float = 5e-5
    tv_delta: float = 1e-3
    iters: int = 200
    checkpoint_every: int = 10
    tol: float = 1e-10
    armijo: float = 1e-4
    max_backtracks: int = 40


@dataclass
class RefineResult:
    texture: UVTexture
    objective: float
    history: list = field(default_factory=list)  # objective at every checkpoint
    iters: int = 0


class _SparseApply(torch.autograd.Function):
    """``S @ t`` for a fixed scipy CSR matrix, differentiable in ``t``."""

    @staticmethod
    def forward(ctx, t, S, St):
        ctx.St = St
        return torch.from_numpy(S @ t.detach().numpy())

    @staticmethod
    def backward(ctx, g):
        return torch.from_numpy(ctx.St @ g.numpy()), None, None


def sampling_matrix(uv, resolution):
    """Sparse (P, R*R) bilinear sampling operator matching ``sample_texture``."""
    uv = np.asarray(uv, dtype=np.float64)
    r = resolution
    x = np.clip(uv[:, 0] * r - 0.5, 0, r - 1)
    y = np.clip(uv[:, 1] * r - 0.5, 0, r - 1)
    x0 = np.minimum(np.floor(x).astype(np.int64), r - 2)
    y0 = np.minimum(np.floor(y).astype(np.int64), r - 2)
    fx, fy = x - x0, y - y0
    rows = np.repeat(np.arange(len(uv)), 4)
    cols = np.stack([y0 * r + x0, y0 * r + x0 + 1, (y0 + 1) * r + x0, (y0 + 1) * r + x0 + 1], 1).ravel()
    vals = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], 1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(uv), r * r))


class RefineProblem:
    """The refinement objective as a differentiable float64 function of T (R*R, 3)."""

    def __init__(self, sampler, shade, raw, init, resolution, cfg):
        self.S = sampler
        self.St = sampler.T.tocsr()
        self.shade = torch.as_tensor(shade, dtype=torch.float64)
        self.raw = torch.as_tensor(raw, dtype=torch.float64)
        self.init = torch.as_tensor(init, dtype=torch.float64).reshape(-1, 3)
        self.r = resolution
        self.cfg = cfg

    @classmethod
    def build(cls, texture, lighting, mesh, views, cfg, obs=None):
        obs = observe_views(mesh, views) if obs is None else obs
        uv = np.concatenate([o.uv for o in obs])
        shade = np.concatenate([lighting.irradiance(o.normal) for o in obs])
        raw = np.concatenate([o.raw for o in obs])
        r = texture.resolution
        return cls(sampling_matrix(uv, r), shade, raw, texture.texels, r, cfg)

    def observed(self):
        """(R, R) bool: texels that some observed pixel samples with nonzero weight."""
        hit = np.asarray(abs(self.S).sum(axis=0)).ravel() > 0
        return hit.reshape(self.r, self.r)

    def parts(self, t):
        cfg = self.cfg
        pred = _SparseApply.apply(t, self.S, self.St) * self.shade
        data = ((pred - self.raw) ** 2).mean() if len(self.raw) else t.new_zeros(())
        prox = ((t - self.init) ** 2).mean()
        img = t.reshape(self.r, self.r, 3)
        dx = img[:-1, 1:] - img[:-1, :-1]
        dy = img[1:, :-1] - img[:-1, :-1]
        tv = torch.sqrt(dx * dx + dy * dy + cfg.tv_delta ** 2).mean()
        return data, prox, tv

    def __call__(self, t):
        data, prox, tv = self.parts(t)
        return data + self.cfg.mu_prox * prox + self.cfg.mu_tv * tv

    def value_and_grad(self, t):
        t = t.detach().requires_grad_(True)
        e = self(t)
        (g,) = torch.autograd.grad(e, t)
        return e.item(), g

    def preconditioner(self):
        """Diagonal of the Hessian of the quadratic (data + proximity) part."""
        n = max(self.raw.numel(), 1)
        s2 = self.St.multiply(self.St)
        d = 2.0 * torch.from_numpy(s2 @ (self.shade ** 2).numpy()) / n
        d = d + 2.0 * self.cfg.mu_prox / self.init.numel()
        return d + 1e-12 + 1e-6 * float(d.max())


def minimize(problem, cfg, x0=None):
    """Preconditioned gradient descent; accepted steps never increase the objective."""
    x = (problem.init if x0 is None else torch.as_tensor(x0, dtype=torch.float64)).clone()
    pre = problem.preconditioner()
    e, g = problem.value_and_grad(x)
    if not np.isfinite(e):
        raise NumericalError("refinement objective is not finite at the initial texture")
    history = [e]
    increases = 0
    step = 1.0
    it = 0
    for it in range(1, cfg.iters + 1):
        d = -g / pre
        slope = float((g * d).sum())
        if slope >= 0 or -slope < cfg.tol * max(abs(e), 1e-300):
            break
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = torch.clamp(x + step * d, min=0.0)
            ec = float(problem(cand))
            if np.isfinite(ec) and ec <= e + cfg.armijo * float((g * (cand - x)).sum()):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        x = cand
        e_prev = e
        e, g = problem.value_and_grad(x)
        step = min(step * 2.0, 1.0)
        if it % cfg.checkpoint_every == 0:
            increases = increases + 1 if e > history[-1] else 0
            history.append(e)
            if increases >= 3:
                raise NumericalError(f"refinement diverged: objective rose at 3 consecutive checkpoints "
                                     f"({history[-4:]})", history)
        if abs(e_prev - e) <= cfg.tol * max(abs(e_prev), 1e-300):
            break
    history.append(e)
    return x, e, history, it


def refine_albedo(texture, lighting, mesh, views, cfg=None, obs=None):
    """Refine a fused texture so its re-rendering under ``lighting`` matches ``views``."""
    cfg = cfg or RefineConfig()
    problem = RefineProblem.build(texture, lighting, mesh, views, cfg, obs)
    x, e, history, it = minimize(problem, cfg)
    log.info("refinement stopped after %d iterations at objective %.6g", it, e)
    texels = x.reshape(texture.resolution, texture.resolution, 3).numpy()
    return RefineResult(UVTexture(texels, texture.valid.copy()), e, history, it)
