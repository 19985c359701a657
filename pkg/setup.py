"""Package setup."""

import pathlib

import setuptools  # type: ignore

import quadlab._version

project_dir = pathlib.Path(__file__).parent

setuptools.setup(
    name="quadlab",
    version=quadlab._version.__version__,  # pylint:disable=protected-access
    description="A numerical lab for deformations of doubly ruled quadrics",
    long_description=(project_dir / "README.md").read_text(),
    long_description_content_type="text/markdown",
    license="MIT",
    packages=["quadlab"],
    python_requires=">=3.8",
    install_requires=[
        req for req in (project_dir / "requirements.txt").read_text().split("\n") if req
    ],
    entry_points={"console_scripts": ["quadlab=quadlab.cli:main"]},
)
