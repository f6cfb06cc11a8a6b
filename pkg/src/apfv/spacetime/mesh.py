"""
Slab triangulations of the cylinder
-----------------------------------

Slices ``H_{t_i}`` at times ``0 = t_0 < ... < t_S = T`` each carry ``J``
nodes on the circle. Node ``j`` moves affinely in time inside a slab, so the
elements are trapezoids with two spacelike faces and two straight vertical
faces. Element ``j`` of a slice spans ``[theta_j, theta_{j+1}]`` with the last
element wrapping across the seam (``theta_J = theta_0 + 2 pi``).

.. autoclass:: SpacetimeTriangulation
.. autofunction:: mesh_sweep_check
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from apfv.errors import ConfigurationError, PreconditionError, StructureError

TWO_PI = 2 * np.pi
N_K = 2


@dataclass(frozen=True, eq=False)
class SpacetimeTriangulation:
    slice_times: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.slice_times, dtype=np.float64)
        th = np.asarray(self.nodes, dtype=np.float64)
        object.__setattr__(self, "slice_times", t)
        object.__setattr__(self, "nodes", th)
        if t.ndim != 1 or t.size < 2:
            raise ConfigurationError("need at least two slice times")
        if th.shape[0] != t.size or th.ndim != 2:
            raise ConfigurationError("nodes must have shape (slices, elements)")
        if th.shape[1] < 3:
            raise ConfigurationError("need at least three elements per slice")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("slice times must start at 0 and increase strictly")
        self.check_conformity()

    # {{{ constructors

    @classmethod
    def uniform(cls, elements, slabs, T, offset=0.0):
        if slabs < 1 or not T > 0:
            raise ConfigurationError("slabs must be >= 1 and T > 0")
        t = np.linspace(0.0, T, slabs + 1)
        th = offset + TWO_PI * np.arange(elements) / elements
        return cls(t, np.tile(th, (slabs + 1, 1)))

    @classmethod
    def jittered(cls, elements, slabs, T, amplitude=0.2, seed=0, frequency=1.0):
        """Nonuniform mesh with node offsets ``amplitude * h * d_j(t)``, where
        ``d_j(t) = (a_j + b_j sin(2 pi frequency t + p_j))/2`` with random
        ``a_j, b_j`` in ``[-1/2, 1/2]``.

        The offsets are smooth in time, so vertical faces tilt by ``O(tau)``;
        jitter drawn independently per slice would tilt them by ``O(h)`` and
        force an ``O(h)`` viscosity that no time step can absorb.
        """
        if not 0 <= amplitude < 0.5:
            raise ConfigurationError("jitter amplitude must lie in [0, 0.5)")
        mesh = cls.uniform(elements, slabs, T)
        rng = np.random.default_rng(seed)
        h = TWO_PI / elements
        a, b = rng.uniform(-0.5, 0.5, (2, elements))
        p = rng.uniform(0, TWO_PI, elements)
        t = mesh.slice_times[:, None]
        offset = 0.5 * (a + b * np.sin(TWO_PI * frequency * t + p))
        return cls(mesh.slice_times, mesh.nodes + amplitude * h * offset)

    # }}}

    @property
    def slabs(self):
        return self.slice_times.size - 1

    @property
    def elements(self):
        return self.nodes.shape[1]

    @property
    def T(self):
        return float(self.slice_times[-1])

    def face_bounds(self, i):
        """Left and right angles of the spacelike faces on slice ``i``."""
        a = self.nodes[i]
        b = np.roll(a, -1)
        b[-1] += TWO_PI
        return a, b

    def widths(self, i):
        a, b = self.face_bounds(i)
        return b - a

    def check_conformity(self):
        for i in range(self.slice_times.size):
            w = self.widths(i)
            if np.any(w <= 0):
                raise StructureError(f"slice {i}: nodes are not increasing around the circle")
            if abs(np.sum(w) - TWO_PI) > 1e-12 * TWO_PI:
                raise StructureError(f"slice {i}: faces do not tile the circle")
        # node tracks are unwrapped angles
        moves = np.abs(np.diff(self.nodes, axis=0))
        if np.any(moves >= np.pi):
            i = int(np.argwhere(moves >= np.pi)[0, 0])
            raise StructureError(f"slab {i}: node track jumps across the seam")

    # {{{ family bookkeeping

    @cached_property
    def tau(self):
        return np.diff(self.slice_times)

    @property
    def tau_max(self):
        return float(np.max(self.tau))

    @property
    def tau_min(self):
        return float(np.min(self.tau))

    @cached_property
    def h(self):
        return max(float(np.max(self.widths(i))) for i in range(self.slice_times.size))

    def mesh_ratios(self):
        """``((tau_max^2 + h^2)/tau_min, tau_max^2/h)``."""
        return ((self.tau_max**2 + self.h**2) / self.tau_min, self.tau_max**2 / self.h)

    # }}}

    def same_as(self, other: SpacetimeTriangulation):
        return (self is other
                or (self.nodes.shape == other.nodes.shape
                    and np.array_equal(self.nodes, other.nodes)
                    and np.array_equal(self.slice_times, other.slice_times)))


def mesh_sweep_check(meshes):
    """Require both mesh-family ratios to decrease strictly along a refinement sweep."""
    meshes = list(meshes)
    if len(meshes) < 2:
        raise PreconditionError("a refinement sweep needs at least two meshes")
    r = np.array([m.mesh_ratios() for m in meshes])
    if np.any(np.diff(r, axis=0) >= 0):
        raise PreconditionError(f"mesh-family ratios do not decrease along the sweep: {r.tolist()}")
    return r
