"""
Run configuration: a bundled profile, deep-merged with an optional user YAML file and
section-prefixed overrides, validated, and exposed as typed model configs.
"""
import copy
import logging
import shutil
from os.path import join, exists, basename
from blendshape_diffusion.configuration.validate import check_run_config
from blendshape_diffusion.models.adapter import AdapterConfig, LossWeights
from blendshape_diffusion.models.diffusion import DenoiserConfig, make_schedule
from blendshape_diffusion.models.vae import VaeConfig
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.shared.constants import PROFILE_NAMES, PROFILES_DIRECTORY
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.util.file import check_valid_file_path, read_yaml_file

logger = logging.getLogger(__name__)


def profile_path(profile):
    """Location of a bundled profile"""
    if profile not in PROFILE_NAMES:
        raise ConfigurationError(f"Unknown profile {profile!r}; choose one of {PROFILE_NAMES}")
    return join(PROFILES_DIRECTORY, f"{profile}.yml")


def deep_merge(base, update):
    """Recursively merge mapping `update` into a copy of `base`"""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_override(document, dotted_key, value):
    """Set `section.key` (or a top-level key) in place. Unknown sections are rejected."""
    section, _, key = dotted_key.partition(".")
    if not key:
        if section not in document:
            raise ConfigurationError(f"Unknown configuration key {dotted_key!r}")
        document[section] = value
        return document
    if not isinstance(document.get(section), dict):
        raise ConfigurationError(f"Unknown configuration section {section!r} in {dotted_key!r}")
    if key not in document[section]:
        raise ConfigurationError(f"Unknown configuration key {dotted_key!r}")
    document[section][key] = value
    return document


class RunConfig:
    """
    A validated run configuration document.

    :param document: the merged and validated configuration mapping
    :param source: path of the user config file, if any
    """

    def __init__(self, document, source=None):
        self.document = check_run_config(document)
        self.source = source

    def __getitem__(self, section):
        return self.document[section]

    @property
    def seed(self):
        """Base seed of the run"""
        return self.document["seed"]

    @property
    def precision(self):
        """32 or 64"""
        return self.document["precision"]

    @property
    def manifest_path(self):
        """Dataset manifest named in the config, or None"""
        return self.document["dataset"]["manifest"]

    @property
    def single_latent(self):
        """True when one VAE/denoiser pair models the full face"""
        return self.document["ablation"]["single_latent"]

    def with_overrides(self, overrides):
        """A new RunConfig with `section.key` overrides applied and validated"""
        document = copy.deepcopy(self.document)
        for dotted_key, value in (overrides or {}).items():
            apply_override(document, dotted_key, value)
        return RunConfig(document, source=self.source)

    def vae_config(self, region, partition=None):
        """VaeConfig for a face region"""
        partition = partition or FacePartition.default()
        section = self.document["vae"]
        return VaeConfig(
            region=region,
            coefficients=len(partition.region_indices(region)),
            layers=section["layers"],
            heads=section["heads"],
            width=section["width"],
            latent_tokens=section["latent_tokens"],
            max_len=section["max_len"],
            kl_weight=section["kl_weight"],
            skip_connections=section["skip_connections"],
        )

    def denoiser_config(self):
        """DenoiserConfig; width and latent tokens follow the VAE latent"""
        section = self.document["denoiser"]
        return DenoiserConfig(
            layers=section["layers"],
            heads=section["heads"],
            width=self.document["vae"]["width"],
            latent_tokens=self.document["vae"]["latent_tokens"],
            conditioning=section["conditioning"],
            skip_connections=section["skip_connections"],
        )

    def adapter_config(self, partition=None):
        """AdapterConfig over the upper-face coefficients"""
        partition = partition or FacePartition.default()
        section = self.document["adapter"]
        return AdapterConfig(
            coefficients=len(partition.upper_idx),
            layers=section["layers"],
            heads=section["heads"],
            width=section["width"],
            max_len=section["max_len"],
            skip_connections=section["skip_connections"],
        )

    def loss_weights(self):
        """λ_lat and λ_adapter"""
        return LossWeights(**self.document["loss"])

    def schedule(self):
        """The training noise schedule"""
        section = self.document["schedule"]
        return make_schedule(section["steps"], section["beta_start"], section["beta_end"])

    def schedule_blob(self):
        """Schedule parameters recorded in denoiser checkpoints"""
        section = self.document["schedule"]
        return {
            "schedule.steps": section["steps"],
            "schedule.beta_start": repr(section["beta_start"]),
            "schedule.beta_end": repr(section["beta_end"]),
        }

    def snapshot(self, run_directory):
        """
        Copy the user config file byte for byte into the run directory, next to the merged
        document. Returns the snapshot path, or None without a user file.
        """
        if not self.source:
            return None
        destination = join(run_directory, basename(self.source))
        shutil.copyfile(self.source, destination)
        return destination


def load_run_config(config_file=None, profile="tiny", overrides=None):
    """
    Build a RunConfig from a bundled profile, an optional user YAML file and overrides.

    User files may hold whole sections (`vae: {layers: 2}`) or section-prefixed keys
    (`vae.layers: 2`); both are merged over the profile.

    :param config_file: path to a YAML file, or None
    :param profile: one of PROFILE_NAMES
    :param overrides: mapping of `section.key` to value, applied last
    :raises ConfigurationError: on a missing file, unknown keys or a schema violation
    """
    document = read_yaml_file(profile_path(profile))
    if config_file:
        if not check_valid_file_path(config_file):
            raise ConfigurationError(f"Configuration file {config_file} does not exist")
        user = read_yaml_file(config_file)
        if not isinstance(user, dict):
            raise ConfigurationError(f"{config_file} must contain a mapping")
        nested = {key: value for key, value in user.items() if "." not in key}
        document = deep_merge(document, nested)
        for dotted_key, value in user.items():
            if "." in dotted_key:
                apply_override(document, dotted_key, value)
    for dotted_key, value in (overrides or {}).items():
        apply_override(document, dotted_key, value)
    run_config = RunConfig(document, source=config_file)
    manifest = run_config.manifest_path
    if manifest and not exists(manifest):
        raise ConfigurationError(f"Dataset manifest {manifest} does not exist")
    logger.debug("Loaded run configuration from profile %s and %s", profile, config_file)
    return run_config


def cli_overrides(options, **extra):
    """
    Section-prefixed overrides from the global CLI flags and command options; None values
    are skipped.

    :param options: the click context object holding seed and precision
    """
    overrides = {}
    if options.get("seed") is not None:
        overrides["seed"] = options["seed"]
    if options.get("precision") is not None:
        overrides["precision"] = options["precision"]
    for key, value in extra.items():
        if value is not None:
            overrides[key] = value
    return overrides
