"""
Functions that relate to manipulating files, loading files, and managing filepaths.
"""
import hashlib
import logging
import shutil
from os import listdir, makedirs
from os.path import isfile, join, exists, isdir
import yaml
from blendshape_diffusion.shared.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def read_yaml_file(filename):
    """
    Reads a YAML file, safe loads, and returns the dictionary

    :param filename: name of the yaml file
    :return: dictionary of YAML file contents
    """
    with open(filename, "r", encoding="utf-8") as yaml_file:
        try:
            cfg = yaml.safe_load(yaml_file)
        except yaml.YAMLError as exc:
            logger.critical(exc)
            raise ConfigurationError(f"Could not parse the YAML file {filename}: {exc}") from exc
    return cfg if cfg is not None else {}


def check_valid_file_path(file):
    """
    Checks if the file path is valid.

    :param file: The file to check.
    :return: True if it exists, False if it does not
    :rtype: bool
    """
    if exists(file):
        return True
    logger.critical(
        "File does not exist or is formatted incorrectly: %s \nPlease provide a valid path.",
        file,
    )
    return False


def list_files_in_directory(directory, suffix=None):
    """Equivalent of ls command, and return the sorted list of files, optionally filtered by suffix"""
    only_files = [f for f in listdir(directory) if isfile(join(directory, f))]
    if suffix:
        only_files = [f for f in only_files if f.endswith(suffix)]
    return sorted(only_files)


def create_directory_if_it_doesnt_exist(directory):
    """Equivalent of mkdir -p"""
    if not exists(directory):
        makedirs(directory)


def prepare_output_directory(directory, force=False):
    """
    Create an output directory. An existing non-empty directory is refused unless force is set,
    in which case it is emptied first.
    """
    if isdir(directory) and listdir(directory):
        if not force:
            raise ConfigurationError(
                f"Output directory {directory} is not empty. Use --force to overwrite it."
            )
        shutil.rmtree(directory)
    create_directory_if_it_doesnt_exist(directory)


def file_digest(filename):
    """sha256 hex digest of a file's bytes"""
    sha = hashlib.sha256()
    with open(filename, "rb") as file_obj:
        for chunk in iter(lambda: file_obj.read(65536), b""):
            sha.update(chunk)
    return sha.hexdigest()
