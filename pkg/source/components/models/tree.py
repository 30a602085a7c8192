from dataclasses import dataclass

import numpy as np

from .i_classifier import IClassifier

LEAF = -1


@dataclass(frozen=True, eq=False)
class DecisionTree(IClassifier):
    """
    Array-encoded binary tree. Node 0 is the root and children always have larger indices than their parent.

    A row goes left at an internal node iff float32(x[feature]) <= threshold. At a leaf, `value` holds the
    (H0, H1) probability pair; `n_samples` is the number of training rows reaching a node (bootstrap
    duplicates included) and `class_counts` splits it by class.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    class_counts: np.ndarray
    n_inputs: int

    def __post_init__(self):
        nodes = len(self.feature)
        if nodes == 0:
            raise ValueError("A tree needs at least one node.")
        for name in ("threshold", "left", "right", "n_samples"):
            if getattr(self, name).shape != (nodes,):
                raise ValueError(f"Tree array '{name}' has shape {getattr(self, name).shape}, expected ({nodes},).")
        for name in ("value", "class_counts"):
            if getattr(self, name).shape != (nodes, 2):
                raise ValueError(f"Tree array '{name}' has shape {getattr(self, name).shape}, expected ({nodes}, 2).")

        leaves = self.left == LEAF
        if not np.array_equal(leaves, self.right == LEAF):
            raise ValueError("A node must have either two children or none.")
        index = np.arange(nodes)
        internal = ~leaves
        if (self.left[internal] <= index[internal]).any() or (self.right[internal] <= index[internal]).any() \
                or (self.left[internal] >= nodes).any() or (self.right[internal] >= nodes).any():
            raise ValueError("Children must reference later nodes of the same tree.")
        if (self.feature[internal] < 0).any() or (self.feature[internal] >= self.n_inputs).any():
            raise ValueError(f"Split features must be in [0, {self.n_inputs}).")
        if not np.allclose(self.value[leaves].sum(axis=1), 1.0):
            raise ValueError("Leaf probabilities must sum to 1.")

    @property
    def kind(self) -> str:
        return "tree"

    @property
    def n_features(self) -> int:
        return self.n_inputs

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left == LEAF

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in np.flatnonzero(~self.is_leaf):
            depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """
        Index of the leaf every row ends in.
        """
        X = np.asarray(X, dtype=np.float32)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] != LEAF)
        while len(active):
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.left[node[active]] != LEAF]
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self.check_features(X)
        return self.value[self.apply(X)]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "feature": self.feature, "threshold": self.threshold, "left": self.left, "right": self.right,
            "value": self.value, "n_samples": self.n_samples, "class_counts": self.class_counts,
        }

    @classmethod
    def from_arrays(cls, arrays: dict, n_inputs: int) -> "DecisionTree":
        return cls(
            feature=np.asarray(arrays["feature"], dtype=np.int32),
            threshold=np.asarray(arrays["threshold"], dtype=np.float64),
            left=np.asarray(arrays["left"], dtype=np.int32),
            right=np.asarray(arrays["right"], dtype=np.int32),
            value=np.asarray(arrays["value"], dtype=np.float64).reshape(-1, 2),
            n_samples=np.asarray(arrays["n_samples"], dtype=np.float64),
            class_counts=np.asarray(arrays["class_counts"], dtype=np.int64).reshape(-1, 2),
            n_inputs=int(n_inputs),
        )

    @classmethod
    def leaf(cls, y: np.ndarray, class_weights: np.ndarray, n_inputs: int) -> "DecisionTree":
        """
        Single-node tree predicting the class-weighted label frequencies of `y`.
        """
        counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=2)[:2]
        weighted = counts * class_weights
        return cls(
            feature=np.full(1, LEAF, dtype=np.int32),
            threshold=np.zeros(1),
            left=np.full(1, LEAF, dtype=np.int32),
            right=np.full(1, LEAF, dtype=np.int32),
            value=(weighted / weighted.sum())[None, :],
            n_samples=np.array([float(counts.sum())]),
            class_counts=counts[None, :].astype(np.int64),
            n_inputs=int(n_inputs),
        )

    @classmethod
    def from_estimator(cls, estimator, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        """
        Converts a fitted scikit-learn tree into the array encoding.

        Parameters:
            estimator: Fitted DecisionTreeClassifier or ExtraTreeClassifier.
            X (np.ndarray): Rows the estimator was fitted on.
            y (np.ndarray): Their labels.
        """
        structure = estimator.tree_
        nodes = structure.node_count
        # scikit-learn drops classes absent from the (bootstrap) sample
        value = np.zeros((nodes, 2))
        for column, label in enumerate(estimator.classes_):
            value[:, int(label)] = structure.value[:, 0, column]
        value /= value.sum(axis=1, keepdims=True)

        onehot = np.eye(2, dtype=np.int64)[np.asarray(y, dtype=np.int64)]
        class_counts = np.asarray(estimator.decision_path(X).T @ onehot, dtype=np.int64)

        left = structure.children_left.astype(np.int32)
        leaves = left == LEAF
        return cls(
            feature=np.where(leaves, LEAF, structure.feature).astype(np.int32),
            threshold=np.where(leaves, 0.0, structure.threshold).astype(np.float64),
            left=left,
            right=structure.children_right.astype(np.int32),
            value=value,
            n_samples=structure.n_node_samples.astype(np.float64),
            class_counts=class_counts,
            n_inputs=int(estimator.n_features_in_),
        )
