# Sphinx configuration of the DAMSEL documentation

import os
import sys
sys.path.insert(0, os.path.abspath('../../'))

# Run-time dependencies that are not installed on the docs builder
autodoc_mock_imports = ['cloudpickle', 'e13tools', 'mpi4py']

# -- Project information -----------------------------------------------------

project = 'DAMSEL'
copyright = '2021, DAMSEL developers'
author = 'DAMSEL developers'

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
    'sphinx.ext.viewcode',
]

master_doc = 'index'
add_module_names = True

autodoc_default_options = {'members': None,
                           'special-members': '__call__'}
autodoc_member_order = 'groupwise'

napoleon_include_init_with_doc = True
napoleon_use_param = False

intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable/', None),
                       'pandas': ('https://pandas.pydata.org/pandas-docs/stable/', None)}

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
