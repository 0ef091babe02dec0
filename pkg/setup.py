"""
# wrtomo

Robust wavelength-resolved neutron tomography in Python

## Motivation
Time-of-flight neutron imaging measures a projection of the sample at every
wavelength. Powder regions attenuate smoothly in wavelength, but single crystals
diffract strongly at the angles and wavelengths that satisfy the Bragg
condition, and those measurements corrupt a conventional reconstruction.
`wrtomo` reconstructs every wavelength with a robust model-based solver that
rejects the corrupted measurements, returns them as Bragg maps, and links them
to the crystalline domains of the reconstruction as per-domain signatures.

## Try `wrtomo`

    pip install .
    wrtomo simulate --config desk --out run
    wrtomo reconstruct-fbp --out run
    wrtomo reconstruct-rmbir --out run
    wrtomo signatures --out run
    wrtomo evaluate --out run
    wrtomo plot --out run

Run the test suite with `python -m pytest wrtomo` or `wrtomo.testing.run()`.
"""

from setuptools import find_packages, setup

DESCRIPTION = "wrtomo: Robust wavelength-resolved neutron tomography in Python."
LONG_DESCRIPTION = __doc__

NAME = "wrtomo"
LICENSE = "MIT"
PYTHON_VERSION = ">=3.8, <3.12"

INSTALL_REQUIRES = [
    "joblib",
    "matplotlib",
    "numba",
    "numpy>=1.22",
    "pint",
    "pytest",
    "pytest-cov",
    "scikit-image",
    "scipy<1.11",
    "tqdm",
]

EXTRAS_REQUIRE = {
    "dev": [
        "black",
        "isort",
        "pre-commit",
    ],
    "docs": [
        # https://github.com/readthedocs/sphinx_rtd_theme/issues/1115
        "sphinx==5.3.0",
        "sphinx-rtd-theme>=0.5.2",
        "sphinx-autodoc-typehints",
        "enum_tools",
        "sphinx_toolbox",
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
    "Topic :: Scientific/Engineering :: Physics",
    "Topic :: Scientific/Engineering :: Image Processing",
]

PLATFORMS = ["Linux", "Mac OSX", "Unix", "Windows"]
KEYWORDS = "neutron tomography Bragg time-of-flight reconstruction"

exec(open("wrtomo/version.py").read())

setup(
    name=NAME,
    version=__version__,  # noqa: F821
    license=LICENSE,
    packages=find_packages(),
    include_package_data=True,
    package_data={"wrtomo": ["configs/*.json"]},
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    keywords=KEYWORDS,
    classifiers=CLASSIFIERS,
    platforms=PLATFORMS,
    python_requires=PYTHON_VERSION,
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    entry_points={"console_scripts": ["wrtomo=wrtomo.cli:run"]},
)
