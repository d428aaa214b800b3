"""
Setup configuration for the Bandlimit Lab package.
"""

from setuptools import setup, find_packages

setup(
    name="bandlimit-lab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy",
        "scipy",
        "python-dotenv",
    ],
    extras_require={
        "test": ["pytest", "pytest-asyncio", "hypothesis"],
    },
    entry_points={
        "console_scripts": [
            "bandlimit-lab=bandlimit_lab.main:main",
        ],
    },
    python_requires=">=3.9",
    author="Bandlimit Lab Contributors",
    description="Experiments on band-limited Laplacian eigenspaces of compact manifolds",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
