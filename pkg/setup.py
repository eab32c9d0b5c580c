from pathlib import Path

import setuptools

# The long_description field is used by PyPI when you publish a package,
# to build its project page.
long_description = Path("README.md").read_text(encoding="utf-8")
version = Path("otfs/_version.py").read_text(encoding="utf-8")
about = {}
exec(version, about)

setuptools.setup(
    name="otfs-xdd",
    version=about["__version__"],
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    package_data={"otfs": ["fixtures/*.json"]},
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "pandas>=1.2",
        "click==8.0.4",
        "tqdm==4.53.0",
        "typer==0.4.0",
    ],
    entry_points="""
        [console_scripts]
        otfs-sim=otfs.cli.main:__entrypoint
    """,
    description=(
        "OTFS modulation with cross-domain iterative detection and state "
        "evolution"
    ),
    keywords="otfs delay-doppler detection message-passing",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
    license="Apache 2.0",
)
