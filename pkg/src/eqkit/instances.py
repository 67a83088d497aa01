"""Small built-in instances for tests and the verification suite."""

from __future__ import annotations

import numpy as np

from .network import BPR, STABLE_DYNAMICS, CostParams, Network


def parallel_two() -> Network:
    """Two parallel links, t_free=(1,2), unit capacities, linear congestion, demand 10."""
    return Network(
        n_vertices=2,
        edge_tail=[0, 0],
        edge_head=[1, 1],
        cost=CostParams(
            t_free=np.array([1.0, 2.0]),
            capacity=np.array([1.0, 1.0]),
            rho=np.array([1.0, 1.0]),
            mu_power=np.array([1.0, 1.0]),
            model=np.array([BPR, BPR], dtype=object),
        ),
        od_origin=[0],
        od_dest=[1],
        od_demand=[10.0],
        vertex_labels=["a", "b"],
    )


def parallel_two_constant() -> Network:
    """Parallel links with flow-independent times (rho = 0)."""
    net = parallel_two()
    return Network(
        n_vertices=2,
        edge_tail=[0, 0],
        edge_head=[1, 1],
        cost=CostParams(
            t_free=np.array([1.0, 2.0]),
            capacity=np.array([1.0, 1.0]),
            rho=np.array([0.0, 0.0]),
            mu_power=np.array([1.0, 1.0]),
            model=np.array([BPR, BPR], dtype=object),
        ),
        od_origin=[0],
        od_dest=[1],
        od_demand=[10.0],
        vertex_labels=net.vertex_labels,
    )


def parallel_two_sd() -> Network:
    """Capacity-bound parallel links (stable dynamics) with the first link binding."""
    return Network(
        n_vertices=2,
        edge_tail=[0, 0],
        edge_head=[1, 1],
        cost=CostParams(
            t_free=np.array([20.0, 40.0]),
            capacity=np.array([4.0, 100.0]),
            rho=np.array([1.0, 1.0]),
            mu_power=np.array([1.0, 1.0]),
            model=np.array([STABLE_DYNAMICS, STABLE_DYNAMICS], dtype=object),
        ),
        od_origin=[0],
        od_dest=[1],
        od_demand=[6.0],
        vertex_labels=["a", "b"],
    )


def parallel_two_sd_as_bpr(mu_power: float = 1.0 / 32.0) -> Network:
    """The stable-dynamics instance with steep polynomial links instead of hard caps."""
    sd = parallel_two_sd()
    return Network(
        n_vertices=2,
        edge_tail=[0, 0],
        edge_head=[1, 1],
        cost=CostParams(
            t_free=sd.cost.t_free.copy(),
            capacity=sd.cost.capacity.copy(),
            rho=np.array([1.0, 1.0]),
            mu_power=np.array([mu_power, mu_power]),
            model=np.array([BPR, BPR], dtype=object),
        ),
        od_origin=[0],
        od_dest=[1],
        od_demand=[6.0],
        vertex_labels=["a", "b"],
    )


def parallel_three() -> Network:
    """Three parallel links with staggered free-flow times, demand 10."""
    return Network(
        n_vertices=2,
        edge_tail=[0, 0, 0],
        edge_head=[1, 1, 1],
        cost=CostParams(
            t_free=np.array([1.0, 1.5, 2.0]),
            capacity=np.array([1.0, 1.0, 1.0]),
            rho=np.array([1.0, 1.0, 1.0]),
            mu_power=np.array([1.0, 1.0, 1.0]),
            model=np.array([BPR] * 3, dtype=object),
        ),
        od_origin=[0],
        od_dest=[1],
        od_demand=[10.0],
        vertex_labels=["a", "b"],
    )


def chain() -> Network:
    """A 4-vertex directed chain with mixed polynomial exponents."""
    return Network(
        n_vertices=4,
        edge_tail=[0, 1, 2],
        edge_head=[1, 2, 3],
        cost=CostParams(
            t_free=np.array([1.0, 2.0, 0.5]),
            capacity=np.array([2.0, 3.0, 1.0]),
            rho=np.array([0.5, 1.0, 2.0]),
            mu_power=np.array([1.0, 0.5, 0.25]),
            model=np.array([BPR] * 3, dtype=object),
        ),
        od_origin=[0],
        od_dest=[3],
        od_demand=[5.0],
        vertex_labels=["c1", "c2", "c3", "c4"],
    )


def triangle() -> Network:
    """Two-path triangle: a->b->c against the direct edge a->c."""
    return Network(
        n_vertices=3,
        edge_tail=[0, 1, 0],
        edge_head=[1, 2, 2],
        cost=CostParams(
            t_free=np.array([1.0, 1.0, 2.5]),
            capacity=np.array([2.0, 2.0, 3.0]),
            rho=np.array([1.0, 1.0, 1.0]),
            mu_power=np.array([0.25, 1.0, 0.5]),
            model=np.array([BPR] * 3, dtype=object),
        ),
        od_origin=[0],
        od_dest=[2],
        od_demand=[4.0],
        vertex_labels=["a", "b", "c"],
    )


def grid_3x3() -> Network:
    """3x3 grid with right/down edges; two OD pairs sharing vertex v22 as a sink plus one to v12."""
    labels = [f"v{i}{j}" for i in range(3) for j in range(3)]
    idx = {lab: k for k, lab in enumerate(labels)}
    tails, heads = [], []
    for i in range(3):
        for j in range(3):
            if j < 2:
                tails.append(idx[f"v{i}{j}"])
                heads.append(idx[f"v{i}{j + 1}"])
            if i < 2:
                tails.append(idx[f"v{i}{j}"])
                heads.append(idx[f"v{i + 1}{j}"])
    m = len(tails)
    rng = np.random.default_rng(1234)
    return Network(
        n_vertices=9,
        edge_tail=tails,
        edge_head=heads,
        cost=CostParams(
            t_free=np.round(rng.uniform(0.8, 1.6, size=m), 3),
            capacity=np.round(rng.uniform(1.0, 3.0, size=m), 3),
            rho=np.full(m, 1.0),
            mu_power=np.full(m, 0.25),
            model=np.array([BPR] * m, dtype=object),
        ),
        od_origin=[idx["v00"], idx["v01"], idx["v00"]],
        od_dest=[idx["v22"], idx["v22"], idx["v12"]],
        od_demand=[2.0, 1.0, 1.5],
        vertex_labels=labels,
    )


def grid_3x3_uniform() -> Network:
    """3x3 grid with every t_free = 1 and a single corner-to-corner unit demand."""
    base = grid_3x3()
    m = base.n_edges
    return Network(
        n_vertices=9,
        edge_tail=base.edge_tail.copy(),
        edge_head=base.edge_head.copy(),
        cost=CostParams(
            t_free=np.ones(m),
            capacity=np.full(m, 2.0),
            rho=np.full(m, 1.0),
            mu_power=np.full(m, 0.25),
            model=np.array([BPR] * m, dtype=object),
        ),
        od_origin=[0],
        od_dest=[8],
        od_demand=[1.0],
        vertex_labels=base.vertex_labels,
    )


def ring_with_tail() -> Network:
    """A directed 2-cycle on the way to the sink; the reaching subgraph is cyclic."""
    # a -> b -> s, b -> c, c -> b, c -> s
    return Network(
        n_vertices=4,
        edge_tail=[0, 1, 1, 2, 2],
        edge_head=[1, 3, 2, 1, 3],
        cost=CostParams(
            t_free=np.array([1.0, 1.2, 0.7, 0.9, 1.1]),
            capacity=np.array([2.0, 2.0, 1.5, 1.5, 2.0]),
            rho=np.full(5, 1.0),
            mu_power=np.full(5, 0.5),
            model=np.array([BPR] * 5, dtype=object),
        ),
        od_origin=[0],
        od_dest=[3],
        od_demand=[1.0],
        vertex_labels=["a", "b", "c", "s"],
    )


BUILTIN = {
    "parallel-2": parallel_two,
    "parallel-3": parallel_three,
    "chain": chain,
    "triangle": triangle,
    "grid-3x3": grid_3x3,
}


def get(name: str) -> Network:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown built-in instance {name!r}; choose from {sorted(BUILTIN)}") from None
