"""A setuptools based setup module.

See:
https://packaging.python.org/en/latest/distributing.html
https://github.com/pypa/sampleproject
"""

from setuptools import setup

# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, "README.rst"), encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="afdo",
    use_scm_version=True,
    setup_requires=["setuptools_scm"],
    description="Consensus, trust and policy decision stack for Autonomous FAIR Digital Objects",
    long_description=long_description,
    long_description_content_type="text/x-rst",
    # Author details
    author="The afdo developers",
    install_requires=["numpy>=1.17", "scipy>=1.4", "rdflib>=6.0"],
    extras_require={"test": ["pytest"], "docs": ["sphinx", "sphinx_rtd_theme"]},
    python_requires=">=3.7",
    # Choose your license
    license="MIT",
    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Bio-Informatics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
    ],
    # What does your project relate to?
    keywords="fair digital objects consensus trimmed mean trust policy shacl odrl variant classification",
    packages=["afdo"],
    entry_points={"console_scripts": ["afdo=afdo.cli:main"]},
)
