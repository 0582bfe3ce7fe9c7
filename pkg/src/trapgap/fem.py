"""Piecewise-linear stiffness/mass assembly and lowest-eigenpair solves.

Boundary conditions on the outer cell boundary are imposed by a sparse
prolongation ``P`` from reduced unknowns to mesh nodes; the reduced pencil is
``(P^H K P, P^H M P)``. Neumann keeps every node, Dirichlet drops the
boundary nodes, and the quasi-periodic variants tie each high-side node to
its low-side partner with factor ``theta_k`` (``+1`` periodic, ``-1``
antiperiodic). Screens need no treatment: duplicated seam nodes already
decouple the two sides of every screen.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, DegenerateTriangle, MissingPeriodicPairs
from .mesh import Mesh

DENSE_LIMIT = 400


class Variant(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"
    ANTIPERIODIC = "antiperiodic"
    BLOCH = "bloch"


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    K: sp.csr_matrix
    M: sp.csr_matrix
    P: sp.csr_matrix  # mesh nodes x reduced dofs
    variant: Variant
    theta: tuple[complex, complex] | None = None

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    @property
    def dof_map(self) -> np.ndarray:
        """Reduced index of each mesh node (-1 where the node is eliminated)."""
        coo = self.P.tocoo()
        out = np.full(self.P.shape[0], -1, dtype=np.int64)
        out[coo.row] = coo.col
        return out

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Nodal values of reduced vector(s) ``u``."""
        return self.P @ u


@dataclass(frozen=True, eq=False)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray  # reduced dofs x k
    residuals: np.ndarray
    variant: Variant = Variant.NEUMANN


def element_matrices(mesh: Mesh):
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    x, y = p[..., 0], p[..., 1]
    # gradient of barycentric coordinate i is (y_{i+1}-y_{i+2}, x_{i+2}-x_{i+1}) / (2A)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    small = np.flatnonzero(area < 1e-14)
    if small.size:
        raise DegenerateTriangle(int(small[0]), float(area[small[0]]))
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
    me = (np.ones((3, 3)) + np.eye(3))[None] * (area / 12.0)[:, None, None]
    return ke, me


def assemble(mesh: Mesh) -> AssembledSystem:
    """Global stiffness and consistent mass, no boundary reduction."""
    ke, me = element_matrices(mesh)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(n, n))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    return AssembledSystem(K=K.tocsr(), M=M.tocsr(), P=sp.identity(n, format="csr"), variant=Variant.NEUMANN)


def _prolongation(mesh: Mesh, variant: Variant, theta) -> sp.csr_matrix:
    n = mesh.n_nodes
    if variant is Variant.NEUMANN:
        return sp.identity(n, format="csr")
    if variant is Variant.DIRICHLET:
        keep = np.setdiff1d(np.arange(n), mesh.boundary_nodes())
        return sp.csr_matrix((np.ones(keep.size), (keep, np.arange(keep.size))), shape=(n, keep.size))
    px, py = mesh.periodic_pairs
    if mesh.corner_group.size != 4 or (px.size == 0 and py.size == 0):
        raise MissingPeriodicPairs("mesh carries no periodic pairing of the outer boundary")
    t1, t2 = theta
    master = np.arange(n)
    factor = np.ones(n, dtype=complex)
    master[px[:, 1]] = px[:, 0]
    factor[px[:, 1]] = t1
    master[py[:, 1]] = py[:, 0]
    factor[py[:, 1]] = t2
    c00, c10, c01, c11 = mesh.corner_group
    master[[c10, c01, c11]] = c00
    factor[[c10, c01, c11]] = [t1, t2, t1 * t2]
    masters = np.unique(master)
    col = np.searchsorted(masters, master)
    if np.all(factor.imag == 0):
        factor = factor.real
    return sp.csr_matrix((factor, (np.arange(n), col)), shape=(n, masters.size))


def apply_bc(raw: AssembledSystem, mesh: Mesh, variant: Variant | str, theta=None) -> AssembledSystem:
    """Reduce the raw pencil to one outer-boundary condition."""
    variant = Variant(variant)
    if variant is Variant.PERIODIC:
        theta = (1.0, 1.0)
    elif variant is Variant.ANTIPERIODIC:
        theta = (-1.0, -1.0)
    elif variant is Variant.BLOCH:
        if theta is None:
            raise ValueError("Bloch variant needs theta = (theta_1, theta_2)")
        theta = tuple(complex(t) for t in theta)
        if any(abs(abs(t) - 1.0) > 1e-12 for t in theta):
            raise ValueError(f"theta entries must have unit modulus: {theta}")
    else:
        theta = None
    P = _prolongation(mesh, variant, theta)
    PH = P.conj().T.tocsr()
    K = (PH @ raw.K @ P).tocsr()
    M = (PH @ raw.M @ P).tocsr()
    K = 0.5 * (K + K.conj().T)
    M = 0.5 * (M + M.conj().T)
    return AssembledSystem(K=K.tocsr(), M=M.tocsr(), P=P, variant=variant, theta=theta)


def system_for(mesh: Mesh, variant: Variant | str, theta=None) -> AssembledSystem:
    return apply_bc(assemble(mesh), mesh, variant, theta)


def residuals(K, M, values, vectors) -> np.ndarray:
    """Normwise backward errors ``|Ku - lam Mu| / ((|K| + |lam||M|) |u|)``."""
    nk = spla.norm(K, 1)
    nm = spla.norm(M, 1)
    r = K @ vectors - (M @ vectors) * values[None, :]
    return np.linalg.norm(r, axis=0) / ((nk + np.abs(values) * nm) * np.linalg.norm(vectors, axis=0))


def _rayleigh_ritz(K, M, V):
    Kr = V.conj().T @ (K @ V)
    Mr = V.conj().T @ (M @ V)
    Kr = 0.5 * (Kr + Kr.conj().T)
    Mr = 0.5 * (Mr + Mr.conj().T)
    w, Q = scipy.linalg.eigh(Kr, Mr)
    return w, V @ Q


def solve_lowest(system: AssembledSystem, k: int, tol: float = 1e-8) -> EigenResult:
    """The ``k`` smallest eigenpairs of ``K u = lam M u``.

    Shift-invert Lanczos about a small negative shift (so the factorization
    stays definite even when ``K`` is singular), computing a block of
    ``max(k + 2, 8)`` pairs so degenerate clusters are captured whole.
    """
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    K, M = system.K, system.M
    n = system.n_dofs
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    block = min(max(k + 2, 8), n)
    if n <= DENSE_LIMIT or block >= n - 1:
        w, V = scipy.linalg.eigh(K.toarray(), M.toarray())
        w, V = w[:block], V[:, :block]
    else:
        shift = -1e-6 * abs(K.diagonal().sum()) / abs(M.diagonal().sum())
        lu = spla.splu((K - shift * M).tocsc())
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=lu.solve(np.zeros(n, dtype=K.dtype)).dtype)
        # fixed start vector: ARPACK's default is random, which breaks run-to-run reproducibility
        v0 = np.random.default_rng(0).standard_normal(n).astype(op.dtype)
        best, attempts = np.inf, 0
        for ncv in (max(2 * block + 1, 20), max(4 * block, 40), min(n - 1, max(8 * block, 80))):
            attempts += 1
            try:
                _, V = spla.eigsh(
                    K, k=block, M=M, sigma=shift, which="LM", OPinv=op, ncv=min(ncv, n - 1), tol=tol * 1e-2, v0=v0
                )
            except spla.ArpackNoConvergence as exc:
                V = exc.eigenvectors
                if V is None or V.shape[1] < k:
                    continue
            w, V = _rayleigh_ritz(K, M, V)
            res = residuals(K, M, w[:k], V[:, :k])
            best = min(best, float(res.max()))
            if res.max() <= tol:
                break
        else:
            raise ConvergenceFailure(attempts, best)
    w, V = w[:k], V[:, :k]
    # M-normalize; Rayleigh-Ritz/eigh already make V M-orthogonal
    norms = np.sqrt(np.real(np.einsum("ij,ij->j", V.conj(), M @ V)))
    V = V / norms[None, :]
    res = residuals(K, M, w, V)
    if res.max() > tol:
        raise ConvergenceFailure(1, float(res.max()))
    return EigenResult(values=np.real(w), vectors=V, residuals=res, variant=system.variant)


def write_eigen_csv(results: list[EigenResult], header: bool = True) -> str:
    lines = ["index,variant,lambda,residual"] if header else []
    for res in results:
        for i, (lam, r) in enumerate(zip(res.values, res.residuals), start=1):
            lines.append(f"{i},{res.variant.value},{lam:.17g},{r:.17g}")
    return "\n".join(lines) + "\n"
