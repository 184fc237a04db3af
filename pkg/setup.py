from setuptools import find_packages, setup

with open("README.md", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="vponsim",
    version="0.1.0",
    packages=find_packages(include=["vponsim", "vponsim.*"]),
    description="Discrete-event simulator of TWDM-PON mobile fronthaul with east-west splitters and dynamic vPON slicing",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    install_requires=["numpy>=1.24", "networkx>=3.0", "PyYAML>=6.0"],
    entry_points={"console_scripts": ["vponsim = vponsim.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    keywords="pon twdm-pon fronthaul dba network-slicing discrete-event-simulation",
    python_requires=">=3.10",
)
