import argparse
import logging
import sys

from components.errors import EXIT_OK, exit_code_for
from components.explain.attribution import ExplainMethod
from components.features.fused import Scenario
from components.logs import configure_logging
from components.models.selection import FAMILIES
from components.pipeline.config import DEFAULT_CONFIG_PATH, load_pipeline_config
from components.pipeline.stages import COMMANDS, Pipeline

log = logging.getLogger("hosprisk")


def parse_console_arguments(argv: list[str] = None) -> dict:
    """
    Parses command line arguments of the hospitalization-risk pipeline.

    Parameters:
        argv (list[str], optional): Arguments without the program name, sys.argv[1:] when None.

    Returns:
        dict: A dictionary containing the parsed command line arguments.
    """
    parser = argparse.ArgumentParser(description="COVID-19 hospitalization risk pipeline")

    parser.add_argument("command", choices=COMMANDS, help="Stage to run ('all' runs every stage in order)")

    # Global flags
    parser.add_argument("-c", "--config", type=str, default=str(DEFAULT_CONFIG_PATH),
                        help="Pipeline JSON configuration (default: the packaged default.json)")
    parser.add_argument("-w", "--work-dir", type=str, default=None,
                        help="Work directory, overrides the config file and HOSPRISK_WORK_DIR")
    parser.add_argument("--seed", type=int, default=None, help="Base seed, overrides the config file")
    parser.add_argument("-j", "--jobs", type=int, default=1, help="Worker count within a stage (default: 1)")
    parser.add_argument("-f", "--force", action="store_true",
                        help="Rerun stages that are up to date and accept upstream stages of another configuration")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Debug output")
    parser.add_argument("-q", "--quiet", action="count", default=0, help="Warnings and errors only")

    # Stage flags
    parser.add_argument("--scenario", action="append", choices=[s.value for s in Scenario], default=None,
                        help="Scenario to featurize, train or explain (repeatable; default: all configured)")
    parser.add_argument("--model", action="append", choices=list(FAMILIES), default=None,
                        help="Model family to train or explain (repeatable; default: all configured)")
    parser.add_argument("--method", choices=[m.value for m in ExplainMethod], default=None,
                        help="Attribution method, overrides the config file")
    parser.add_argument("--n-patients", type=int, default=None, help="Size of the generated cohort")
    parser.add_argument("--svg", action="store_true", help="Also render the SHAP box plots as SVG (needs a display)")

    args = parser.parse_args(argv)
    return vars(args)


def main(argv: list[str] = None) -> int:
    """
    Loads the configuration, runs the requested command and maps domain errors onto exit codes
    (2 configuration, 3 missing artifact, 4 numerical failure).
    """
    args = parse_console_arguments(argv)
    configure_logging(args["verbose"] - args["quiet"])

    completed = {"run": 0, "skipped": 0}

    def on_stage_completed(stage: str, skipped: bool) -> None:
        completed["skipped" if skipped else "run"] += 1

    try:
        config = load_pipeline_config(args["config"], {
            "seed": args["seed"],
            "work_dir": args["work_dir"],
            "n_patients": args["n_patients"],
            "method": args["method"],
        })
        pipeline = Pipeline(config, args["jobs"], args["force"])
        pipeline.stage_completed += on_stage_completed
        pipeline.run(args["command"], args["scenario"], args["model"], args["svg"])
    except (ValueError, FileNotFoundError, ArithmeticError) as err:
        log.error("%s", err)
        return exit_code_for(err)

    log.info("%s finished: %d stages run, %d up to date", args["command"], completed["run"], completed["skipped"])
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
