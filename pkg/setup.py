#!/usr/bin/python
from setuptools import setup, find_packages

setup(
    setup_requires=['pbr'],
    pbr=True,
    name="laguerre_fit",
    version="0.1",
    packages=find_packages(),
    install_requires=[
        'cliff>=3.1.0',
        'PyYAML>=5.1',
        'numpy>=1.20',
        'scipy>=1.7',
    ],
)
