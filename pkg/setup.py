#!/usr/bin/env python3
"""
setup.py - Package installation for sfafnet

Install with:
    pip install -e .

Or, with PNG support:
    pip install ".[png]"
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="sfafnet",
    version="0.1.0",
    author="sfafnet",
    description="Gated spatial-frequency fusion network for image deblurring, built on numpy",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.10",
    install_requires=["numpy>=1.24", "scikit-image>=0.19"],
    extras_require={
        "png": ["Pillow>=9.0"],
        "dev": ["pytest>=7.0", "pytest-cov>=4.0", "black>=23.0", "ruff>=0.1.0"],
    },
    entry_points={
        "console_scripts": [
            "sfafnet=sfafnet.cli:main",
        ],
    },
)
