from setuptools import setup, find_packages
with open("requirements-minimal.txt") as f:
    requirements = [line for line in f.read().splitlines() if line and not line.startswith("#")]


setup(
    name="DiCohMTL",
    version="0.1",
    description="Dialogue coherence assessment with dialogue-act prediction as an auxiliary task",
    packages=find_packages(exclude=("examples", "examples.*", "fixtures")),
    package_data={"src": ["resources/*.txt"]},
    install_requires=requirements,
    entry_points={"console_scripts": ["dicoh = app.cli:main"]},
)
