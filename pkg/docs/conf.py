# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = "goldenir"
copyright = "2026, goldenir developers"
author = "goldenir developers"

try:
    from goldenir._version import version as release
except ImportError:
    release = "0.0.0"


# -- General configuration ---------------------------------------------------

extensions = [
    "myst_nb",
    "sphinx.ext.napoleon",
    "sphinx_copybutton",
]

nb_execution_mode = "off"
myst_heading_anchors = 4

# sphinx-autoapi
extensions.append("autoapi.extension")
autoapi_dirs = ["../goldenir"]
autoapi_ignore = ["*/_version.py"]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]


# -- Options for HTML output -------------------------------------------------

html_theme = "furo"
html_title = "goldenir"
html_static_path = []
