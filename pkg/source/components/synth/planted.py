import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from ..errors import ConfigurationError
from ..features.spec import AGE_BINS, GENDER_COLUMN, FeatureSpec

log = logging.getLogger(__name__)

# Normal quantiles: IQR = 1.349 sigma
IQR_SIGMAS = 1.349
AGE_BIN_NAMES = AGE_BINS[:-1]


@dataclass(frozen=True)
class LabDistribution:
    """
    Per-label log-normal distribution of one quantity with a shared log-scale sigma, so that the
    log-likelihood ratio of a measurement is linear in its log value.
    """
    name: str
    loinc: str
    family: str
    unit: str
    mu0: float
    mu1: float
    sigma: float

    @property
    def coefficient(self) -> float:
        """
        Log-odds contributed per standard deviation of the log value of one measurement.
        """
        return (self.mu1 - self.mu0) / self.sigma

    def mu(self, label: int) -> float:
        return self.mu1 if label else self.mu0

    def sample(self, label: int, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.exp(rng.normal(self.mu(label), self.sigma, size=size))


def _separate(p0: float, p1: float, prevalence: float, log_odds: float) -> tuple[float, float]:
    """
    Class-conditional probabilities with the given logit difference whose mixture equals the
    pooled fraction `prevalence * p1 + (1 - prevalence) * p0`.
    """
    pooled = prevalence * p1 + (1.0 - prevalence) * p0
    return _split_pooled(pooled, prevalence, log_odds)


def _split_pooled(pooled: float, prevalence: float, log_odds: float) -> tuple[float, float]:
    def excess(a):
        return prevalence * expit(a + log_odds) + (1.0 - prevalence) * expit(a) - pooled

    a = brentq(excess, -60.0, 60.0, xtol=1e-14)
    return float(expit(a)), float(expit(a + log_odds))


class PlantedRiskModel(object):
    """
    Generative model of the Boolean profile, the age bin and the measurements of a patient given the
    planted label. Features are independent given the label, so the log-odds of the label given the
    Boolean profile and age bin is exactly

        bias + sum(coefficient[feature] * feature)

    with one coefficient per Boolean, one per age bin (one-hot) and, per measurement, the lab
    coefficient times the standardized log value.
    """

    def __init__(self, boolean_names: list[str], p0: np.ndarray, p1: np.ndarray, age0: np.ndarray,
                 age1: np.ndarray, labs: list[LabDistribution], prevalence: float) -> None:
        if not 0.0 < prevalence < 1.0:
            raise ConfigurationError(f"Generator error: planted prevalence {prevalence} is outside (0, 1).")
        self._boolean_names = list(boolean_names)
        self._p = np.vstack([p0, p1]).astype(float)
        self._age = np.vstack([age0 / age0.sum(), age1 / age1.sum()])
        self._age_cumulative = np.cumsum(self._age, axis=1)
        self._labs = list(labs)
        self._prevalence = prevalence

    @classmethod
    def from_marginals(cls, marginals: dict, spec: FeatureSpec, prevalence: float, signal_strength: float = 1.0,
                       planted: Optional[dict] = None, shifted_quantities: Optional[Iterable[str]] = None
                       ) -> "PlantedRiskModel":
        """
        Builds the model from class-conditional marginals (percentages of H0 and H1 patients).

        The pooled prevalence of every Boolean and age bin is held fixed while the class separation is
        scaled by `signal_strength` (0 makes every feature independent of the label).

        Parameters:
            marginals (dict): Decoded marginals file.
            spec (FeatureSpec): Feature definitions; every condition needs a marginal.
            prevalence (float): Planted label prevalence.
            signal_strength (float): Scale of all log-odds.
            planted (dict, optional): Overrides {name: {"prevalence", "log_odds"}}.
            shifted_quantities (Iterable[str], optional): Quantities whose distribution depends on the
                label; defaults to those flagged "shifted" in the marginals.

        Returns:
            PlantedRiskModel: The model.

        Raises:
            ConfigurationError: If a marginal is missing or invalid or an override names an unknown feature.
        """
        planted = planted or {}
        booleans = [condition.name for condition in spec.conditions] + [GENDER_COLUMN]
        unknown = sorted(set(planted) - set(booleans))
        if unknown:
            raise ConfigurationError(f"Generator error: planted features {unknown} are not Boolean features.")

        entries = dict(marginals.get("conditions", {}))
        entries[GENDER_COLUMN] = marginals.get(GENDER_COLUMN)
        p0, p1 = np.zeros(len(booleans)), np.zeros(len(booleans))
        for index, name in enumerate(booleans):
            entry = entries.get(name)
            if not isinstance(entry, dict) or not all(0 < entry.get(key, -1) < 100 for key in ("h0", "h1")):
                raise ConfigurationError(f"Generator error: marginal of '{name}' needs h0 and h1 percentages in (0, 100).")
            if name in planted:
                override = planted[name]
                p0[index], p1[index] = _split_pooled(override["prevalence"], prevalence,
                                                     signal_strength * override["log_odds"])
            else:
                low, high = entry["h0"] / 100.0, entry["h1"] / 100.0
                p0[index], p1[index] = _separate(low, high, prevalence,
                                                 signal_strength * float(logit(high) - logit(low)))

        ages = marginals.get("age_bins", {})
        if set(ages) != set(AGE_BIN_NAMES):
            raise ConfigurationError(f"Generator error: 'age_bins' must have the keys {list(AGE_BIN_NAMES)}.")
        age0 = np.array([ages[name]["h0"] for name in AGE_BIN_NAMES], dtype=float)
        age1 = np.array([ages[name]["h1"] for name in AGE_BIN_NAMES], dtype=float)
        if (age0 <= 0).any() or (age1 <= 0).any():
            raise ConfigurationError("Generator error: age bin percentages must be positive.")
        age0, age1 = age0 / age0.sum(), age1 / age1.sum()
        pooled = prevalence * age1 + (1.0 - prevalence) * age0
        age0 = pooled * (age0 / pooled) ** signal_strength
        age1 = pooled * (age1 / pooled) ** signal_strength

        quantities = marginals.get("quantities", {})
        if shifted_quantities is None:
            shifted_quantities = [name for name, entry in quantities.items() if entry.get("shifted")]
        shifted = set(shifted_quantities)
        labs = []
        for quantity in spec.quantities:
            entry = quantities.get(quantity.name)
            if not isinstance(entry, dict) or not all(len(entry.get(key, ())) == 3 for key in ("h0", "h1")):
                raise ConfigurationError(f"Generator error: quantity '{quantity.name}' needs h0 and h1 quartiles.")
            q0, q1 = np.log(entry["h0"]), np.log(entry["h1"])
            sigma = ((q0[2] - q0[0]) + (q1[2] - q1[0])) / (2 * IQR_SIGMAS)
            if not sigma > 0:
                raise ConfigurationError(f"Generator error: quantity '{quantity.name}' has an empty IQR.")
            mean = prevalence * q1[1] + (1.0 - prevalence) * q0[1]
            scale = signal_strength if quantity.name in shifted else 0.0
            labs.append(LabDistribution(
                quantity.name, quantity.loinc, quantity.family, entry.get("unit", ""),
                mu0=float(mean + scale * (q0[1] - mean)), mu1=float(mean + scale * (q1[1] - mean)), sigma=float(sigma),
            ))

        model = cls(booleans, p0, p1, age0, age1, labs, prevalence)
        log.debug("Planted model: prevalence %.4f, signal strength %.2f, bias %.3f, %d nonzero coefficients",
                  prevalence, signal_strength, model.bias, len(model.ranking()))
        return model

    @property
    def prevalence(self) -> float:
        return self._prevalence

    @property
    def boolean_names(self) -> list[str]:
        return list(self._boolean_names)

    @property
    def labs(self) -> list[LabDistribution]:
        return list(self._labs)

    def boolean_probabilities(self, label: int) -> np.ndarray:
        return self._p[int(label)].copy()

    def age_probabilities(self, label: int) -> np.ndarray:
        return self._age[int(label)].copy()

    @property
    def bias(self) -> float:
        p0, p1 = self._p
        return float(logit(self._prevalence) + np.log((1.0 - p1) / (1.0 - p0)).sum())

    @property
    def coefficients(self) -> dict[str, float]:
        """
        The exact coefficient vector used for generation, keyed by feature name.
        """
        p0, p1 = self._p
        coefficients = dict(zip(self._boolean_names, (logit(p1) - logit(p0)).tolist()))
        coefficients.update(zip(AGE_BIN_NAMES, np.log(self._age[1] / self._age[0]).tolist()))
        coefficients.update((lab.name, lab.coefficient) for lab in self._labs)
        return coefficients

    def sample_profiles(self, labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """
        Draws Boolean profiles and age bins for the given planted labels.

        Returns:
            tuple[np.ndarray, np.ndarray]: n x B Booleans (in `boolean_names` order) and n age bin indices.
        """
        labels = np.asarray(labels, dtype=int)
        booleans = rng.random((len(labels), len(self._boolean_names))) < self._p[labels]
        u = rng.random(len(labels))
        bins = (u[:, None] >= self._age_cumulative[labels]).sum(axis=1)
        return booleans, np.minimum(bins, len(AGE_BIN_NAMES) - 1)

    def log_odds(self, booleans: np.ndarray, age_bins: np.ndarray) -> np.ndarray:
        """
        Planted log-odds of H1 for Boolean profiles and age bins.
        """
        p0, p1 = self._p
        age = np.log(self._age[1] / self._age[0])
        return self.bias + np.asarray(booleans, dtype=float) @ (logit(p1) - logit(p0)) + age[np.asarray(age_bins)]

    def ranking(self) -> list[str]:
        return rank_coefficients(self.coefficients)


def rank_coefficients(coefficients: dict[str, float], tolerance: float = 1e-12) -> list[str]:
    """
    Feature names with a nonzero coefficient, by descending magnitude (ties by name).
    """
    nonzero = [(name, value) for name, value in coefficients.items() if abs(value) > tolerance]
    return [name for name, _ in sorted(nonzero, key=lambda item: (-abs(item[1]), item[0]))]


def planted_prevalence(target_prevalence: float, noise: float) -> float:
    """
    Planted label prevalence that yields `target_prevalence` observed hospitalizations when each label
    is flipped with probability `noise`.

    Raises:
        ConfigurationError: If no planted prevalence in (0, 1) reaches the target.
    """
    if noise >= 0.5:
        raise ConfigurationError(f"Generator error: noise {noise} makes the labels uninformative.")
    prevalence = (target_prevalence - noise) / (1.0 - 2.0 * noise)
    if not 0.0 < prevalence < 1.0:
        raise ConfigurationError(
            f"Generator error: prevalence {target_prevalence} is unachievable with noise {noise}.")
    return prevalence


def read_marginals(path: Union[str, Path]) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            return json.loads(f.read())
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"Generator error: {path} is not valid JSON ({err}).")


def write_truth_header(f, model: PlantedRiskModel, **details) -> None:
    header = {"kind": "header", "bias": model.bias, "coefficients": model.coefficients,
              "planted_prevalence": model.prevalence, **details}
    f.write(json.dumps(header, separators=(",", ":"), sort_keys=True))
    f.write("\n")


def read_truth(path: Union[str, Path]) -> tuple[dict, list[dict]]:
    """
    Reads a truth file.

    Returns:
        tuple[dict, list[dict]]: Header and per-patient rows.

    Raises:
        OSError: If the file cannot be read.
        ConfigurationError: If the first line is not a header.
    """
    with open(path, encoding="utf-8") as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ConfigurationError(f"Truth error: {path} does not start with a header line.")
    return lines[0], lines[1:]


def ground_truth_ranking(path: Union[str, Path]) -> list[str]:
    """
    Features of the planted model sorted by descending absolute coefficient; zero coefficients are left out.

    Parameters:
        path (str | Path): Truth file written by the generator.

    Returns:
        list[str]: Feature names (Booleans, age bins and quantity names).
    """
    header, _ = read_truth(path)
    return rank_coefficients(header["coefficients"])


def truth_labels(path: Union[str, Path]) -> dict[str, int]:
    """
    Observed labels of the truth file, keyed by patient id.
    """
    _, rows = read_truth(path)
    return {row["patient_id"]: row["observed_label"] for row in rows}

