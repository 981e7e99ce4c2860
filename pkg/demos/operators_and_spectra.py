"""Walk through the graph-operator library on small hand-checkable graphs.

Builds the normalized adjacency, symmetric Laplacian, scaled Laplacian, and
pruned operator on toy graphs and prints their dense forms and spectra.
"""

import numpy as np

from specsearch import graphs
from specsearch.graphs import LaplacianVariant, Variant

np.set_printoptions(precision=4, suppress=True)


def show(title, op):
    print(f"\n{title}")
    print(op.to_dense())
    print("spectrum:", graphs.eig_operator(op).eigenvalues)


def main():
    # A 3-node path: 0 - 1 - 2. Small enough to verify every entry by hand.
    rng = np.random.default_rng(0)
    p3 = graphs.Graph(3, 2, [(0, 1), (1, 2)], rng.standard_normal((3, 2)),
                      [0, 1, 0], name="P3")
    print(f"graph: {p3}")

    show("normalized adjacency with one self-loop (c=1)",
         graphs.build_operator(p3, LaplacianVariant(Variant.ADJ_SYM_NORM, 1.0)))
    show("symmetric normalized Laplacian (spectrum lives in [0, 2])",
         graphs.build_operator(p3, LaplacianVariant(Variant.SYM_LAPLACIAN)))
    show("scaled Laplacian (spectrum mapped into [-1, 1])",
         graphs.build_operator(p3, LaplacianVariant(Variant.SCALED_LAPLACIAN)))

    # Mean-minus-std pruning: with strong self-loops (c=5) on a sparse graph,
    # the off-diagonal entries fall below the threshold and are dropped.
    sparse = graphs.Graph(4, 2, [(0, 1)], rng.standard_normal((4, 2)),
                          [0, 1, 0, 1], name="sparse")
    print("\npruned operator on a 4-node graph with a single edge, c=5")
    print(graphs.prune_mean_std(sparse, 5.0).to_dense())


if __name__ == "__main__":
    main()
