from typing import Optional


class ConfigurationError(ValueError):
    """
    Raised when a configuration or definition file does not have the expected structure.
    """


class MalformedRecordError(ValueError):
    """
    Raised when a single record line cannot be turned into a RawRecord.
    """


class PatientNotFoundError(KeyError):
    """
    Raised when a patient identifier is not present in a record store.
    """

    def __init__(self, patient_id: str):
        super().__init__(patient_id)
        self.patient_id = patient_id

    def __str__(self) -> str:
        return f"Unknown patient '{self.patient_id}'."


class MissingArtifactError(FileNotFoundError):
    """
    Raised when a pipeline stage needs an artifact that an upstream stage has not produced yet.

    Parameters:
        stage (str): Name of the stage that has to be run first.
        path (str): Artifact that was looked for.
    """

    def __init__(self, stage: str, path: str = ""):
        message = f"Missing artifact{f' {path}' if path else ''}; run `{stage}` first."
        super().__init__(message)
        self.stage = stage
        self.path = path

    def __str__(self) -> str:
        return self.args[0]


class NumericalError(ArithmeticError):
    """
    Raised when a computation produces non-finite values.

    Parameters:
        message (str): Description of the failure.
        epoch (int, optional): Training epoch in which the failure happened.
    """

    def __init__(self, message: str, epoch: Optional[int] = None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


# Process exit codes used by main()
EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_NUMERICAL = 4


def exit_code_for(error: BaseException) -> int:
    """
    Maps a domain exception onto the process exit code.

    Parameters:
        error (BaseException): Exception that terminated a command.

    Returns:
        int: Exit code.
    """
    if isinstance(error, MissingArtifactError):
        return EXIT_MISSING_ARTIFACT
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, ValueError):
        return EXIT_CONFIGURATION
    raise error
