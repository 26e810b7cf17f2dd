"""
# fedctr

Federated native-ad CTR prediction across behavior platforms.

## Motivation
Native ads on a platform are clicked by users whose interests are mostly recorded elsewhere:
in search logs, browsing histories, and other platforms that cannot share raw behaviors.
`fedctr` learns user embeddings on every behavior platform, aggregates them on a user server
under Laplace perturbation, and trains the whole pipeline with a gradient-routing protocol
in which no party sees another party's raw data or model.

## What is included

- Attention-based user and ad models with hand-derived backward passes.
- In-process federation of an ad platform, a user server and K behavior platforms, with a
  recording transport and a privacy-boundary audit of every message.
- Local and aggregated Laplace perturbation, and a behavior-inference attack to measure leakage.
- A synthetic multi-platform data generator, experiment runners for the platform, noise,
  model-variant, behavior-fraction and training-fraction ablations, and the `fedctr`
  command line.
"""

from setuptools import find_packages, setup

DESCRIPTION = "fedctr: Federated native-ad CTR prediction across behavior platforms."
LONG_DESCRIPTION = __doc__

NAME = "fedctr"
LICENSE = "MIT"
PYTHON_VERSION = ">=3.8, <3.12"

INSTALL_REQUIRES = [
    "h5py",
    "joblib",
    "matplotlib",
    "numba",
    "numpy",
    "pytest",
    "pytest-cov",
    "scipy",
    "tqdm",
]

EXTRAS_REQUIRE = {
    "dev": [
        "black",
        "isort",
        "pre-commit",
    ],
    "docs": [
        "sphinx==5.3.0",
        "sphinx-rtd-theme>=0.5.2",
        "sphinx-autodoc-typehints",
        "sphinx_toolbox",
        "enum_tools",
        "sphinx-argparse",
    ],
}

CLASSIFIERS = [
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: MIT License",
    "Operating System :: MacOS",
    "Operating System :: POSIX",
    "Operating System :: Unix",
    "Operating System :: Microsoft :: Windows",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3.8",
    "Programming Language :: Python :: 3.9",
    "Programming Language :: Python :: 3.10",
    "Programming Language :: Python :: 3.11",
    "Topic :: Scientific/Engineering",
    "Topic :: Scientific/Engineering :: Artificial Intelligence",
]

PLATFORMS = ["Linux", "Mac OSX", "Unix", "Windows"]
KEYWORDS = "federated-learning click-through-rate differential-privacy recommendation"

exec(open("fedctr/version.py").read())

setup(
    name=NAME,
    version=__version__,  # noqa: F821
    license=LICENSE,
    packages=find_packages(),
    include_package_data=True,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    keywords=KEYWORDS,
    classifiers=CLASSIFIERS,
    platforms=PLATFORMS,
    python_requires=PYTHON_VERSION,
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    entry_points={"console_scripts": ["fedctr = fedctr.cli:main"]},
)
