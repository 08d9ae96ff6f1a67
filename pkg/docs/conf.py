#!/usr/bin/env python3
#
# Cohort-AVN documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys
from datetime import date

sys.path.insert(0, os.path.abspath("."))
sys.path.insert(0, os.path.abspath(".."))


# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.intersphinx",
    "sphinx.ext.todo",
    "sphinx.ext.coverage",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "myst_parser",
]

# "dollarmath" for the gap and latency formulas in the schema pages
myst_enable_extensions = ["dollarmath", "amsmath"]
myst_dmath_double_inline = True

templates_path = ["_templates"]

source_suffix = [".rst", ".md"]

master_doc = "index"

project = "Cohort-AVN"
copyright = f"{date.today().year}, Cohort-AVN developers"

# The short X.Y version.
version = "0.1.0"
# The full version, including alpha/beta/rc tags.
release = "0.1.0"

exclude_patterns = ["_build"]

add_module_names = False

# Sort members by the order in the source files instead of alphabetically
autodoc_member_order = "bysource"

# Show both the class-level docstring and the constructor docstring
autoclass_content = "both"

pygments_style = "gruvbox-dark"


# -- Options for HTML output ----------------------------------------------

html_theme = "pydata_sphinx_theme"

html_static_path = ["_static"]

html_show_sphinx = False

htmlhelp_basename = "CohortAVNdoc"


# -- Options for LaTeX output ---------------------------------------------

latex_elements = {}

latex_documents = [
    (
        "index",
        "Cohort-AVN.tex",
        "Cohort-AVN Documentation",
        "Cohort-AVN developers",
        "manual",
    )
]


# -- Options for manual page output ---------------------------------------

man_pages = [
    ("index", "cohort-avn", "Cohort-AVN Documentation", ["Cohort-AVN developers"], 1)
]


intersphinx_mapping = {"python": ("https://docs.python.org/3", None)}
