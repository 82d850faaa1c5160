# Configuration file for the Sphinx documentation builder.
import os
import sys
from pathlib import Path

import sphinx_rtd_theme

# Document the package from the checkout rather than an installed copy
sys.path.append(str(Path(os.path.dirname(__file__)).parent))

master_doc = 'index'
project = 'blendshape_diffusion'
copyright = '2026, blendshape_diffusion contributors'
author = 'blendshape_diffusion contributors'

extensions = [
    'recommonmark',
    'sphinx_markdown_tables',
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.mathjax',
]
# torch is heavy to install on the docs builder
autodoc_mock_imports = ['torch', 'matplotlib']

source_suffix = ['.rst', '.md']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
html_theme_options = {
    'prev_next_buttons_location': 'both',
    'collapse_navigation': False,
    'sticky_navigation': True,
    'titles_only': False,
}
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

# The package documents parameters with :param: fields
napoleon_google_docstring = False
napoleon_numpy_docstring = False
napoleon_use_param = True
napoleon_use_rtype = True
