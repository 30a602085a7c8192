import math

from .errors import ConfigurationError

# Only the public math functions/constants are visible to expressions
_NAMESPACE = {name: value for name, value in vars(math).items() if not name.startswith("_")}
_NAMESPACE["__builtins__"] = {"min": min, "max": max, "round": round, "int": int, "abs": abs}


def evaluate_recursive(data, variables: dict[str, float] = None):
    """
    Evaluates configuration values that may be written as arithmetic expressions.

    Hyperparameters that depend on the data shape are stored as strings such as "sqrt(k)" or
    "0.3*k"; they are evaluated here once the variables are known. Lists and dictionaries are
    processed recursively, numbers, Booleans and None are returned unchanged.

    Parameters:
        data (list, dict, str, int, float, bool, None): Value to evaluate.
        variables (dict): Variable names visible to the expressions, e.g. {"k": 1573}.

    Returns:
        The evaluated value with the same nesting as `data`.

    Raises:
        ConfigurationError: If an expression cannot be evaluated or the type is unsupported.
    """
    variables = variables or {}

    if isinstance(data, str):
        try:
            return eval(data, dict(_NAMESPACE), dict(variables))
        except Exception as e:
            raise ConfigurationError(f"Error in evaluating expression '{data}': {e}")

    elif isinstance(data, list):
        return [evaluate_recursive(element, variables) for element in data]

    elif isinstance(data, dict):
        return {key: evaluate_recursive(value, variables) for key, value in data.items()}

    elif data is None or isinstance(data, (bool, int, float)):
        return data

    else:
        raise ConfigurationError(f"Unsupported type: {type(data)}")


def evaluate_count(data, variables: dict[str, float], minimum: int = 1) -> int:
    """
    Evaluates an expression and rounds it to a positive integer count (e.g. max_features).

    Parameters:
        data (str, int, float): Expression or number.
        variables (dict): Variables visible to the expression.
        minimum (int): Lower bound of the result.

    Returns:
        int: Rounded and clipped value.
    """
    value = evaluate_recursive(data, variables)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigurationError(f"Expression '{data}' must evaluate to a finite number.")
    return max(minimum, int(round(value)))
