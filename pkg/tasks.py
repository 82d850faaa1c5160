#!/usr/bin/env python
import sys
import os
import logging
from invoke import task, Collection, UnexpectedExit, Failure

logger = logging.getLogger(__name__)
# Create the necessary collections (namespaces)
ns = Collection()

docs = Collection('docs')
ns.add_collection(docs)

test = Collection('test')
ns.add_collection(test)

integration = Collection('integration')
ns.add_collection(integration)

unit = Collection('unit')
ns.add_collection(unit)

build = Collection('build')
ns.add_collection(build)

INTEGRATION_DIRECTORY = os.path.join('tmp', 'integration')
CLI = 'blendshape-diffusion --profile tiny --seed 7 --precision 64'


def run_or_exit(c, command, **kwargs):
    """Run a shell command; log critically and exit 1 when it fails"""
    try:
        c.run(command, **kwargs)
    except UnexpectedExit as u_e:
        logger.critical(f"FAIL! UnexpectedExit: {u_e}")
        sys.exit(1)
    except Failure as f_e:
        logger.critical(f"FAIL: Failure: {f_e}")
        sys.exit(1)


@task
def make_html(c):
    """Make the HTML docs locally"""
    c.run('make -C ./docs html')


@task
def remove_html_files(c):
    """Remove the html files"""
    c.run('rm -rf ./docs/_build/*')
    c.run('rmdir ./docs/_build/')


# BUILD
@task
def build_package(c):
    """Build the blendshape_diffusion package from the current directory contents"""
    c.run('python -m pip install --upgrade setuptools wheel')
    c.run('python setup.py -q sdist bdist_wheel')


@task(pre=[build_package])
def install_package(c):
    """Install the blendshape_diffusion package built from the current directory contents"""
    c.run('pip3 install -q dist/blendshape_diffusion-*.tar.gz')


@task
def uninstall_package(c):
    """Uninstall the blendshape_diffusion package"""
    c.run('echo "y" | pip3 uninstall blendshape_diffusion', pty=True)


# INTEGRATION TESTS
@task
def clean_integration_directory(c):
    """Remove the integration run directory"""
    run_or_exit(c, f'rm -rf {INTEGRATION_DIRECTORY}')


@task
def version_check(c):
    """Print the version"""
    run_or_exit(c, 'blendshape-diffusion --version', pty=True)


@task(pre=[clean_integration_directory])
def pipeline(c):
    """
    Integration testing: gen-data, train both VAEs, pretrain the adapter, train both denoisers,
    sample one test item and evaluate on the tiny profile.
    """
    d = INTEGRATION_DIRECTORY
    run_or_exit(c, f'{CLI} gen-data --out {d}/data --n 90')
    run_or_exit(c, f'{CLI} train-vae --region upper --manifest {d}/data/manifest.tsv --out {d}/upper_vae.edck')
    run_or_exit(c, f'{CLI} train-vae --region mouth --manifest {d}/data/manifest.tsv --out {d}/mouth_vae.edck')
    run_or_exit(c, f'{CLI} pretrain-adapter --manifest {d}/data/manifest.tsv --out {d}/adapter.edck')
    run_or_exit(c, f'{CLI} train-diff --region upper --manifest {d}/data/manifest.tsv '
                   f'--vae-ckpt {d}/upper_vae.edck --adapter-ckpt {d}/adapter.edck --out {d}/upper_denoiser.edck')
    run_or_exit(c, f'{CLI} train-diff --region mouth --manifest {d}/data/manifest.tsv '
                   f'--vae-ckpt {d}/mouth_vae.edck --out {d}/mouth_denoiser.edck')
    run_or_exit(c, f'mkdir -p {d}/pred {d}/gt')
    run_or_exit(c, f'{CLI} sample --audio {d}/data/audio/seq_00000.edaf --upper-ckpt {d}/upper_denoiser.edck '
                   f'--mouth-ckpt {d}/mouth_denoiser.edck --out {d}/pred/seq_00000.edbs')
    run_or_exit(c, f'cp {d}/data/sequences/seq_00000.edbs {d}/gt/')
    run_or_exit(c, f'{CLI} eval --pred {d}/pred --gt {d}/gt --out {d}/report.tsv --plot {d}/report.png')


# TEST - SECURITY
@task
def security_scan(c):
    """Runs `bandit` and `safety check`"""
    run_or_exit(c, 'bandit -r blendshape_diffusion/')
    run_or_exit(c, 'safety check')


# TEST - LINT
@task
def run_linter(c):
    """Linting with `pylint` and `black`"""
    run_or_exit(c, 'black blendshape_diffusion/')
    run_or_exit(c, 'pylint blendshape_diffusion/', warn=False)


# UNIT TESTING
@task
def run_nosetests(c):
    """Unit testing: Runs unit tests using `nosetests`"""
    c.run('echo "Running Unit tests"')
    run_or_exit(c, 'nosetests -v  --logging-level=CRITICAL')


@task
def run_pytest(c):
    """Unit testing: Runs unit tests using `pytest`"""
    c.run('echo "Running Unit tests"')
    run_or_exit(c, 'python -m pytest -v')


@task
def run_acceptance(c):
    """Acceptance trend runs (minutes of CPU): learning signal, adapter and latent-structure trends"""
    run_or_exit(c, 'BLENDSHAPE_DIFFUSION_ACCEPTANCE=1 python -m pytest -v test/acceptance')


# Add all testing tasks to the test collection
integration.add_task(clean_integration_directory, 'clean')
integration.add_task(version_check, 'version')
integration.add_task(pipeline, 'pipeline')

unit.add_task(run_nosetests, 'nose')
unit.add_task(run_pytest, 'pytest')
unit.add_task(run_acceptance, 'acceptance')

docs.add_task(remove_html_files, 'clean-html')
docs.add_task(make_html, 'make-html')

test.add_task(run_linter, 'lint')
test.add_task(security_scan, 'security')

build.add_task(build_package, 'build-package')
build.add_task(install_package, 'install-package')
build.add_task(uninstall_package, 'uninstall-package')
