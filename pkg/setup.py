import setuptools
from pathlib import Path

BASE = Path(__file__).parent
long_description = (BASE / "README.md").read_text()


setuptools.setup(
    name="mosaic-dro",
    version="0.1.0",
    author="Michael Herman",
    author_email="michael@mherman.org",
    description="Multi-source Wasserstein distributionally robust optimization.",
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        "dacite>=1.8.1",
        "numpy>=1.26.4",
        "pandas>=2.2.2",
        "peewee>=3.17.5",
        "requests>=2.32.3",
        "scipy>=1.13.1",
    ],
    entry_points={"console_scripts": ["mosaic=mosaic.cli:main"]},
    long_description=long_description,
    long_description_content_type="text/markdown"
)
