# -*- coding: utf-8 -*-
#
# sctpath documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys
sys.path.insert(0, os.path.abspath('../'))

# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.napoleon', 'sphinx.ext.intersphinx']

templates_path = ['_templates']

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'pandas': ('https://pandas.pydata.org/docs/', None),
}

source_suffix = '.rst'

master_doc = 'index'

project = u'sctpath'
copyright = u'2026, The sctpath developers'
author = u'The sctpath developers'

version = u'0.1'
release = u'0.1'

language = 'en'

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

pygments_style = 'sphinx'

todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'

html_static_path = ['_static']

htmlhelp_basename = 'sctpathdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc, 'sctpath.tex', u'sctpath Documentation',
     u'The sctpath developers', 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'sctpath', u'sctpath Documentation',
     [author], 1)
]

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
    (master_doc, 'sctpath', u'sctpath Documentation',
     author, 'sctpath', 'Sparse convolutional transformer for tissue blocks.',
     'Miscellaneous'),
]
