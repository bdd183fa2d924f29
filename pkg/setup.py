"""ptshell."""
from setuptools import setup

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(
    name="ptshell",
    description="Polarization tensors and PT-vanishing design of perturbed core-shell spheres",
    version="0.1.0",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["ptshell", "ptshell.cli_admin"],
    install_requires=["numpy>=1.22", "scipy>=1.8"],
    test_suite="ptshell.tests",
    entry_points={
        "console_scripts": [
            # cli_admin
            "ptshell = ptshell.cli_admin.ptshell:main",
        ]
    },
)
