"""Nystrom discretisation of the interior and modified exterior Dirichlet
equations, matrix-free GMRES and off-surface evaluation of the solution."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .qbx import LayerEvaluator, QbxParams, TargetSet

INV4PI = kernels.INV4PI
SIDES = ("interior", "exterior")


@dataclass
class BvpSpec:
    """Dirichlet problem: boundary data ``f`` at the nodes of ``domain``."""
    side: str
    f: np.ndarray
    domain: object = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError("side must be 'interior' or 'exterior'")
        self.f = np.asarray(self.f, dtype=float)
        if not np.all(np.isfinite(self.f)):
            raise ValueError("boundary data must be finite")
        if self.domain is not None and self.f.shape != (self.domain.n_nodes,):
            raise ValueError("boundary data length %d does not match %d nodes"
                             % (len(self.f), self.domain.n_nodes))


@dataclass
class GmresState:
    tol: float = 1e-10
    maxit: int = 200
    restart: int = None
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False


# ---------------------------------------------------------------- operator A

def component_integrals(domain, sigma):
    """(|S_k|^{-1/2} int_{dD_k} sigma dS) for every component k."""
    sw = np.asarray(sigma, dtype=float) * domain.weights
    area = domain.areas()
    return np.array([sw[domain.component_slice(k)].sum()
                     for k in range(len(domain.components))]) / np.sqrt(area)


def apply_A(domain, sigma, targets):
    """Rank-M operator sum_k (|S_k|^{-1/2} int sigma) G(x_k, x) at ``targets``."""
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    coef = component_integrals(domain, sigma)
    out = np.zeros(len(x))
    for k, xk in enumerate(domain.interior_points):
        d = x - xk
        out += coef[k] * INV4PI / np.sqrt(np.einsum("ij,ij->i", d, d))
    return out


# ---------------------------------------------------------------- Nystrom

class NystromOperator:
    """Matrix-free left-hand side of the second-kind equation.

    interior: -sigma/2 + D sigma   (interior one-sided QBX)
    exterior: +sigma/2 + D sigma + A sigma   (exterior one-sided QBX)

    ``with_A=False`` drops the rank-M term of the exterior operator.
    """

    def __init__(self, domain, side, params=None, far_field="direct", tree_params=None,
                 with_A=True):
        if side not in SIDES:
            raise ValueError("side must be 'interior' or 'exterior'")
        self.domain = domain
        self.side = side
        self.params = params or QbxParams()
        self.with_A = with_A and side == "exterior"
        self.evaluator = LayerEvaluator(domain, self.params, None, far_field, side, tree_params)
        self.matvecs = 0

    @property
    def shape(self):
        n = self.domain.n_nodes
        return n, n

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        s = -0.5 if self.side == "interior" else 0.5
        out = s * sigma + self.evaluator(sigma)
        if self.with_A:
            out += apply_A(self.domain, sigma, self.domain.nodes)
        self.matvecs += 1
        return out

    def dense(self, max_n=5000):
        """Assembled matrix (debug oracle, small problems only)."""
        d = self.domain
        n = d.n_nodes
        if n > max_n:
            raise MemoryError("dense assembly limited to %d unknowns" % max_n)
        M = kernels.dl_weights(d.nodes, d.nodes, d.normals, d.weights)
        c = self.evaluator.correction
        cols = c.starts[:, None] + np.arange(c.vals.shape[1])[None, :]
        np.add.at(M, (np.repeat(c.rows, cols.shape[1]), cols.ravel()), c.vals[c.vidx].ravel())
        ev = self.evaluator
        jump = 0.5 if ev.side == "exterior" else -0.5
        s = -0.5 if self.side == "interior" else 0.5
        M[np.diag_indices(n)] += s - (jump if ev.params.onsurface == "one_sided" else 0.0)
        if self.with_A:
            area = d.areas()
            for k, xk in enumerate(d.interior_points):
                sl = d.component_slice(k)
                g = INV4PI / np.linalg.norm(d.nodes - xk, axis=1)
                M[:, sl] += np.outer(g, d.weights[sl]) / np.sqrt(area[k])
        return M


def nystrom_matvec(domain, sigma, spec, params=None, far_field="direct", tree_params=None):
    """One application of the second-kind operator for ``spec.side``."""
    return NystromOperator(domain, spec.side, params, far_field, tree_params)(sigma)


# ---------------------------------------------------------------- GMRES

def gmres_solve(matvec, rhs, state=None, x0=None):
    """GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    Stops when ||A x - b|| / ||b|| <= state.tol.  ``state`` records the
    iteration count, the residual history and a convergence flag; on
    reaching ``maxit`` the best iterate is returned with converged=False.
    """
    state = state or GmresState()
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    state.iterations = 0
    state.residuals = []
    state.converged = False
    if bnorm == 0.0:
        state.converged = True
        state.residuals.append(0.0)
        return np.zeros(n)
    m = state.restart or state.maxit
    while True:
        r = b - matvec(x) if np.any(x) else b.copy()
        beta = np.linalg.norm(r)
        if not state.residuals:
            state.residuals.append(beta / bnorm)
        if beta / bnorm <= state.tol:
            state.converged = True
            return x
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] == 0.0
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / den, H[j + 1, j] / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            state.iterations += 1
            j_done = j + 1
            res = abs(g[j + 1]) / bnorm
            state.residuals.append(res)
            if res <= state.tol or state.iterations >= state.maxit or breakdown:
                break
        y = np.linalg.solve(np.triu(H[:j_done, :j_done]), g[:j_done])
        x = x + V[:j_done].T @ y
        if state.residuals[-1] <= state.tol:
            state.converged = True
            return x
        if state.iterations >= state.maxit:
            return x


def solve_bvp(domain, spec, params=None, far_field="direct", state=None, tree_params=None):
    """Solve the second-kind equation; returns (sigma, state, operator)."""
    op = NystromOperator(domain, spec.side, params, far_field, tree_params)
    state = state or GmresState()
    sigma = gmres_solve(op, spec.f, state)
    return sigma, state, op


# ---------------------------------------------------------------- evaluation

def side_of(domain, points):
    """Index of the component containing each point, -1 when exterior."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(x), -1)
    for k, comp in enumerate(domain.components):
        out[comp.shape.contains(x)] = k
    return out


def postprocess_field(domain, sigma, spec, eval_targets, params=None, far_field="direct",
                      tree_params=None):
    """Solution u = D sigma (+ A sigma for exterior problems) off the surface."""
    x = np.atleast_2d(np.asarray(eval_targets, dtype=float)).reshape(-1, 3)
    if len(x) == 0:
        return np.zeros(0)
    where = side_of(domain, x)
    bad = (where < 0) if spec.side == "interior" else (where >= 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError("target %d at %s is on the wrong side for the %s problem"
                         % (i, x[i], spec.side))
    ev = LayerEvaluator(domain, params or QbxParams(), TargetSet.off_surface(x), far_field,
                        spec.side, tree_params)
    u = ev(sigma)
    if spec.side == "exterior":
        u = u + apply_A(domain, sigma, x)
    return u
