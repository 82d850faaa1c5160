"""
Validation for run configuration documents.
"""
import logging
from schema import And, Or, Schema, SchemaError, Use
from blendshape_diffusion.shared.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def check(conf_schema, conf):
    """
    Validates a user-supplied document vs a defined schema.

    :param conf_schema: The Schema object that defines the required structure.
    :param conf: The user-supplied document to validate against the required structure.
    :return: the validated document, with Use() conversions applied
    :raises ConfigurationError: listing what did not match
    """
    try:
        return conf_schema.validate(conf)
    except SchemaError as schema_error:
        details = [line for line in schema_error.autos if line] or [str(schema_error)]
        logger.critical(details[-1])
        raise ConfigurationError("Invalid run configuration: " + " ".join(details)) from schema_error


POSITIVE_INT = And(int, lambda value: value >= 1, error="must be a positive integer")
NON_NEGATIVE_INT = And(int, lambda value: value >= 0, error="must be a non-negative integer")
NON_NEGATIVE_FLOAT = And(Use(float), lambda value: value >= 0, error="must be a non-negative number")
OPTIONAL_EPOCHS = Or(None, POSITIVE_INT)
PROBABILITY = And(Use(float), lambda value: 0 < value < 1, error="must lie strictly between 0 and 1")

RUN_CONFIG_SCHEMA = Schema(
    {
        "seed": NON_NEGATIVE_INT,
        "precision": Or(32, 64, error="precision must be 32 or 64"),
        "dataset": {"manifest": Or(None, str)},
        "vae": {
            "layers": POSITIVE_INT,
            "heads": POSITIVE_INT,
            "width": And(POSITIVE_INT, lambda value: value % 2 == 0, error="width must be even"),
            "latent_tokens": POSITIVE_INT,
            "max_len": And(int, lambda value: value >= 2, error="max_len must be at least 2"),
            "kl_weight": NON_NEGATIVE_FLOAT,
            "skip_connections": bool,
        },
        "denoiser": {
            "layers": POSITIVE_INT,
            "heads": POSITIVE_INT,
            "conditioning": Or("concat", "cross_attention"),
            "skip_connections": bool,
        },
        "adapter": {
            "layers": POSITIVE_INT,
            "heads": POSITIVE_INT,
            "width": And(POSITIVE_INT, lambda value: value % 2 == 0, error="width must be even"),
            "max_len": And(int, lambda value: value >= 2, error="max_len must be at least 2"),
            "skip_connections": bool,
        },
        "loss": {"lambda_lat": NON_NEGATIVE_FLOAT, "lambda_adapter": NON_NEGATIVE_FLOAT},
        "schedule": {
            "steps": And(int, lambda value: value >= 2, error="schedule steps must be at least 2"),
            "beta_start": PROBABILITY,
            "beta_end": PROBABILITY,
        },
        "optimizer": {
            "lr": And(Use(float), lambda value: value > 0, error="lr must be positive"),
            "batch_size": POSITIVE_INT,
            "weight_decay": NON_NEGATIVE_FLOAT,
            "beta1": PROBABILITY,
            "beta2": PROBABILITY,
        },
        "budget": {
            "vae_steps": NON_NEGATIVE_INT,
            "diffusion_steps": NON_NEGATIVE_INT,
            "adapter_steps": NON_NEGATIVE_INT,
            "vae_epochs": OPTIONAL_EPOCHS,
            "diffusion_epochs": OPTIONAL_EPOCHS,
            "adapter_epochs": OPTIONAL_EPOCHS,
        },
        "training": {"log_every": POSITIVE_INT, "sampled_z0": bool},
        "inference": {"steps": POSITIVE_INT, "sampler": Or("ddpm", "ddim")},
        "ablation": {"single_latent": bool},
    }
)


def check_run_config(document):
    """Validate a merged run configuration document and the cross-field rules"""
    validated = check(RUN_CONFIG_SCHEMA, document)
    schedule = validated["schedule"]
    if schedule["beta_start"] > schedule["beta_end"]:
        raise ConfigurationError("schedule.beta_start must not exceed schedule.beta_end")
    if validated["inference"]["steps"] > schedule["steps"]:
        raise ConfigurationError(
            f"inference.steps ({validated['inference']['steps']}) exceeds schedule.steps ({schedule['steps']})"
        )
    for section in ("vae", "denoiser", "adapter"):
        width = validated["vae"]["width"] if section == "denoiser" else validated[section]["width"]
        if width % validated[section]["heads"]:
            raise ConfigurationError(f"{section} width {width} is not divisible by its heads")
    return validated
