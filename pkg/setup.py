import setuptools

from rlforge import __version__

with open("README.md", "r") as f:
    long_description = f.read()

with open("requirements.txt") as f:
    required = [x for x in f.read().splitlines() if not x.startswith("#")]

setuptools.setup(
    name="rlforge",
    version=__version__,
    description="Small, deterministic reinforcement learning toolkit: vectorised envs, replay buffers, "
    "return estimators and on-policy, off-policy and offline trainers.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    package_dir={
        "rlforge": "rlforge",
        "rlforge.workflow": "rlforge/workflow",
        "rlforge.workflow.scripts": "rlforge/workflow/scripts",
    },
    packages=["rlforge", "rlforge.workflow", "rlforge.workflow.scripts"],
    package_data={"rlforge": ["config/config.yaml", "environment.yaml"]},
    include_package_data=True,
    entry_points={"console_scripts": ["rlforge = rlforge.cli:RLForge"]},
    classifiers=["Programming Language :: Python :: 3", "License :: OSI Approved :: MIT License"],
    license="MIT",
    python_requires=">=3.8",
    install_requires=required,
    extras_require={"test": ["pytest>=6.0"]},
)
