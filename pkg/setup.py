from setuptools import setup
import importlib.util
import os

on_rtd = os.environ.get('READTHEDOCS') == 'True'

name = "terrainmaker"
version = "1.0"
release = "1.0.0"
author = "terrainmaker developers"

# Check for sphinx
found_sphinx = importlib.util.find_spec('sphinx') is not None

cmdclass = {}
command_options = {}

install_requires = [
    "numpy",
    "scipy",
    "h5py",
    "matplotlib",
    "tqdm",
    "tomli; python_version < '3.11'",
]

setup(
    name=name,
    package_dir={
        'terrainmaker': 'terrainmaker'
    },
    packages=[
        "terrainmaker",
        "terrainmaker.gmw_extensions",
        "terrainmaker.pr_extensions",
        "terrainmaker.rl_extensions",
        "terrainmaker.scene_library",
        "terrainmaker.ta_extensions",
        "terrainmaker.tools",
    ],
    version=version,
    description="Multi-floor terrain mapping, traversability and relocalization for legged robots",
    author=author,
    python_requires=">=3.9",
    install_requires=[] if on_rtd else install_requires,
    extras_require={
        "mpi": ["mpi4py"],
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": ["terrainmaker=terrainmaker.cli:main"],
    },
    keywords=["robotics", "legged", "elevation map", "pose graph", "traversability"],
    classifiers=[
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ],
    long_description="""\
        terrainmaker
        -------------------------------------

        Build room-segmented terrain maps from a walking robot's depth
        camera, score them for traversability and relocalize against them.

        """,
    cmdclass=cmdclass,
    command_options=command_options,
)
