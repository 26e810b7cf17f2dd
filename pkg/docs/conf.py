# Sphinx configuration of the fedctr documentation.

import fedctr

project = "fedctr"
copyright = "2026, the fedctr developers"
author = "the fedctr developers"
version = fedctr.__version__
release = version

extensions = [
    "enum_tools.autoenum",
    "sphinx.ext.intersphinx",
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx_autodoc_typehints",
    "sphinx.ext.viewcode",
    "sphinx_rtd_theme",
    "sphinxarg.ext",
    "sphinx.ext.autosectionlabel",
]

# The api pages share section titles such as "Messages and transport".
autosectionlabel_prefix_document = True

exclude_patterns = ["_build"]

html_theme = "sphinx_rtd_theme"
html_theme_options = {"display_version": True}

napoleon_google_docstring = True
napoleon_use_param = True
autodoc_member_order = "bysource"
autodoc_typehints = "description"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
    "matplotlib": ("https://matplotlib.org/stable", None),
    "h5py": ("https://docs.h5py.org/en/stable", None),
    "joblib": ("https://joblib.readthedocs.io/en/stable", None),
}
