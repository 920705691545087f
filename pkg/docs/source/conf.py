#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# terrainmaker documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))


# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc',
    'sphinx.ext.coverage',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.githubpages']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = 'terrainmaker'
copyright = '2026, terrainmaker developers'
author = 'terrainmaker developers'

version = '1.0'
release = '1.0'

language = None

exclude_patterns = []

pygments_style = 'friendly'

todo_include_todos = False


# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'

html_static_path = ['_static']

html_sidebars = {
    '**': [
        'relations.html',
        'searchbox.html',
    ]
}

htmlhelp_basename = 'terrainmakerdoc'


# -- Options for LaTeX output ---------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc, 'terrainmaker.tex', 'terrainmaker Documentation',
     'terrainmaker developers', 'manual'),
]

man_pages = [
    (master_doc, 'terrainmaker', 'terrainmaker Documentation',
     [author], 1)
]

texinfo_documents = [
    (master_doc, 'terrainmaker', 'terrainmaker Documentation',
     author, 'terrainmaker', 'Room-segmented terrain maps for legged robots.',
     'Miscellaneous'),
]

autodoc_mock_imports = ["mpi4py"]
