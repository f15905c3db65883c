#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# setup.py

# Use a consistent encoding
from codecs import open

from setuptools import find_packages, setup

with open("README.md", encoding="utf-8") as f:
    readme = f.read()

about = {}
with open("./fedpet/__about__.py", encoding="utf-8") as f:
    exec(f.read(), about)

install_requires = [
    "decorator >=4.0.0",
    "joblib >=0.8.0",
    "numpy >=1.17.0",
    "pyyaml >=3.13",
    "scipy >=1.4.0",
    "tblib >=1.3.2",
    "tqdm >=4.20.0",
]

setup(
    name=about["__title__"],
    version=about["__version__"],
    description=about["__description__"],
    author=about["__author__"],
    license=about["__license__"],
    long_description=readme,
    long_description_content_type="text/markdown",
    install_requires=install_requires,
    python_requires=">=3.7",
    keywords=(
        "federated-learning parameter-efficient-tuning adapter lora bitfit "
        "prefix-tuning gradient-inversion simulation"
    ),
    packages=find_packages(exclude=["docs", "test"]),
    package_data={"fedpet": ["resources/*.json"]},
    include_package_data=True,
    zip_safe=False,
    entry_points={"console_scripts": ["fedpet = fedpet.__main__:main"]},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
)
