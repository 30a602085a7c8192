from abc import ABC

import numpy as np


class IDifferentiable(ABC):
    """
    An abstract base class representing a model whose H1 logit can be differentiated w.r.t. its inputs.
    """

    def h1_logit(self, X: np.ndarray) -> np.ndarray:
        """
        Computes the H1 logit (log-odds of hospitalization against H0).

        Parameters:
            X (np.ndarray): n x k early-fusion rows.

        Returns:
            np.ndarray: n logits.
        """
        pass

    def h1_logit_gradient(self, X: np.ndarray) -> np.ndarray:
        """
        Computes the gradient of the H1 logit w.r.t. every input, row by row.

        Parameters:
            X (np.ndarray): n x k early-fusion rows.

        Returns:
            np.ndarray: n x k gradients.
        """
        pass
