from abc import ABC

import numpy as np


class IClassifier(ABC):
    """
    An abstract base class representing a fitted H0/H1 classifier working on early-fusion rows.
    """

    @property
    def kind(self) -> str:
        """
        Returns the model tag ("rf", "et", "mlp" or "fusion").

        Returns:
            str: Model tag.
        """
        pass

    @property
    def n_features(self) -> int:
        """
        Returns the number of input columns k.

        Returns:
            int: Number of features.
        """
        pass

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """
        Computes class probabilities.

        Parameters:
            X (np.ndarray): n x k early-fusion rows.

        Returns:
            np.ndarray: n x 2 probabilities of H0 and H1.
        """
        pass

    def predict(self, X: np.ndarray) -> np.ndarray:
        """
        Predicts labels with the argmax rule (H1 iff its probability exceeds 0.5).

        Parameters:
            X (np.ndarray): n x k early-fusion rows.

        Returns:
            np.ndarray: 0/1 labels.
        """
        return np.argmax(self.predict_proba(X), axis=1)

    def check_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"Expected {self.n_features} features, got {X.shape[1]}.")
        return X
