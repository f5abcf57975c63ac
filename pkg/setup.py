# setup.py
from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="eitshape",
    version="0.1.0",
    description="EIT inclusion reconstruction by level-set shape optimization with tensor shape derivatives",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.10",
    install_requires=[
        line.strip()
        for line in open("requirements.txt").readlines()
        if line.strip() and not line.startswith("#")
        and not line.startswith(("pytest", "black", "flake8", "mypy"))
    ],
    extras_require={
        "dev": ["pytest==7.4.3", "pytest-cov==4.1.0", "black==23.12.1", "flake8==7.0.0", "mypy==1.8.0"],
    },
    entry_points={
        "console_scripts": [
            "eitshape=eitshape.cli:main",
        ],
    },
    include_package_data=True,
    package_data={
        "": ["*.toml"],
    },
)
