"""CalAMP blind sensor calibration package."""

__all__ = [
    "bounds",
    "bp_oracle",
    "channels",
    "cli",
    "config",
    "config_parser",
    "instance_io",
    "kernels",
    "metrics",
    "models",
    "priors",
    "results",
    "selfcheck",
    "solver",
    "synthgen",
    "worker",
]
