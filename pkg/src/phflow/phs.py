"""Port-Hamiltonian systems ``dz/dt = (J(z) - R(z)) Q z + B(z) u``.

Systems are either constant (matrices stored once) or callback-backed. For
callback systems the adjoint needs the transposed derivative actions of the
state-dependent matrices; they default to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .network import Network

__all__ = [
    "DimensionError",
    "PhsSystem",
    "flow_phs",
    "hamiltonian",
    "rhs",
    "output",
]

MatrixFn = Callable[[np.ndarray], np.ndarray]
# (z, phi, aux) -> n-vector v with v . h = phi . (M'(z)[h] aux)
DerivativeAction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class DimensionError(ValueError):
    pass


def _const(m: np.ndarray) -> MatrixFn:
    return lambda z: m


@dataclass(frozen=True, eq=False)
class PhsSystem:
    """A port-Hamiltonian system.

    ``J``, ``R`` and ``B`` are either arrays (constant systems) or callables
    of the state. ``split`` marks a two-block state ``(z[:split], z[split:])``
    that the integrator advances with symplectic Euler; ``None`` means no
    such partition is known.

    ``dJ``, ``dR`` and ``dB`` give ``J'(z)*[phi (x) Qz]``, ``R'(z)*[phi (x) Qz]``
    and ``B'(z)*[phi (x) u]`` as functions ``(z, phi, aux) -> n-vector``.
    """

    J: np.ndarray | MatrixFn
    R: np.ndarray | MatrixFn
    Q: np.ndarray
    B: np.ndarray | MatrixFn
    dim_input: int
    split: Optional[int] = None
    dJ: Optional[DerivativeAction] = None
    dR: Optional[DerivativeAction] = None
    dB: Optional[DerivativeAction] = None
    debug: bool = False

    def __post_init__(self):
        q = np.array(self.Q, dtype=float)
        n = q.shape[0]
        if q.shape != (n, n):
            raise DimensionError("Q must be square")
        if not np.allclose(q, q.T, rtol=0, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(q).min() <= 0:
            raise ValueError("Q must be positive definite")
        q.setflags(write=False)
        object.__setattr__(self, "Q", q)
        constant = True
        for name, shape in (("J", (n, n)), ("R", (n, n)), ("B", (n, self.dim_input))):
            m = getattr(self, name)
            if callable(m):
                constant = False
                continue
            m = np.array(m, dtype=float)
            if m.shape != shape:
                raise DimensionError(f"{name} has shape {m.shape}, expected {shape}")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if not callable(self.J) and not np.allclose(self.J, -self.J.T, rtol=0, atol=1e-12):
            raise ValueError("J must be skew-symmetric")
        if not callable(self.R) and not np.allclose(self.R, self.R.T, rtol=0, atol=1e-12):
            raise ValueError("R must be symmetric")
        if self.split is not None and not 0 < self.split < n:
            raise ValueError("split must lie strictly inside the state")
        object.__setattr__(self, "_constant", constant)
        if constant:
            if any(d is not None for d in (self.dJ, self.dR, self.dB)):
                raise ValueError("constant systems have zero derivative terms")
            object.__setattr__(self, "_M", (self.J - self.R) @ q)

    @property
    def dim_state(self) -> int:
        return self.Q.shape[0]

    @property
    def is_constant(self) -> bool:
        return self._constant

    def J_at(self, z) -> np.ndarray:
        m = self.J(z) if callable(self.J) else self.J
        if self.debug and callable(self.J) and not np.allclose(m, -m.T, rtol=0, atol=1e-12):
            raise ValueError("J(z) is not skew-symmetric")
        return m

    def R_at(self, z) -> np.ndarray:
        return self.R(z) if callable(self.R) else self.R

    def B_at(self, z) -> np.ndarray:
        return self.B(z) if callable(self.B) else self.B

    def field(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Unchecked right-hand side; the integrators call this in their inner loops."""
        if self._constant:
            return self._M @ z + self.B @ u
        return (self.J_at(z) - self.R_at(z)) @ (self.Q @ z) + self.B_at(z) @ u

    def state_vjp(self, z: np.ndarray, u: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """Transposed state Jacobian of the right-hand side applied to ``psi``."""
        if self._constant:
            return self._M.T @ psi
        qz = self.Q @ z
        out = self.Q.T @ ((self.J_at(z) - self.R_at(z)).T @ psi)
        if self.dJ is not None:
            out = out + self.dJ(z, psi, qz)
        if self.dR is not None:
            out = out - self.dR(z, psi, qz)
        if self.dB is not None:
            out = out + self.dB(z, psi, u)
        return out

    def control_vjp(self, z: np.ndarray, psi: np.ndarray) -> np.ndarray:
        return self.B_at(z).T @ psi


def _check(sys: PhsSystem, z, u=None):
    z = np.asarray(z, dtype=float)
    if z.shape != (sys.dim_state,):
        raise DimensionError(f"state has shape {z.shape}, expected ({sys.dim_state},)")
    if u is None:
        return z
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.dim_input,):
        raise DimensionError(f"input has shape {u.shape}, expected ({sys.dim_input},)")
    return z, u


def hamiltonian(sys: PhsSystem, z) -> float:
    z = _check(sys, z)
    return 0.5 * float(z @ sys.Q @ z)


def rhs(sys: PhsSystem, z, u) -> np.ndarray:
    z, u = _check(sys, z, u)
    return sys.field(z, u)


def output(sys: PhsSystem, z) -> np.ndarray:
    """Power-conjugate output ``B(z)^T Q z``."""
    z = _check(sys, z)
    return sys.B_at(z).T @ (sys.Q @ z)


def flow_phs(net: Network, dynamic: bool = False) -> PhsSystem:
    """Network flow dynamics with state ``(rho, x)`` and input ``(u_rho, u_x)``.

    ``J = [[0, A], [-A^T, 0]]``, ``R = 0``, ``Q = I``. The static variant uses
    ``B = diag(I, 0)``; ``dynamic=True`` lets ``u_x`` drive the edge
    equation, ``B = I``.
    """
    a = net.incidence_matrix
    nv, ne = a.shape
    n = nv + ne
    j = np.zeros((n, n))
    j[:nv, nv:] = a
    j[nv:, :nv] = -a.T
    b = np.eye(n)
    if not dynamic:
        b[nv:, nv:] = 0.0
    return PhsSystem(J=j, R=np.zeros((n, n)), Q=np.eye(n), B=b, dim_input=n, split=nv)
