from setuptools import setup, find_packages
from gwr_calibration.misc.gwr_calibration_variables import GwrCalibrationVariables

setup(
    name="gwr-calibration",
    version=GwrCalibrationVariables.gwr_calibration_version,
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["main"],
    install_requires=["numpy", "scipy", "pandas", "joblib", "PySide6", "platformdirs", "geojson"],
    extras_require={"test": ["pytest"]},
    description="Calibration of low-cost air-quality sensor networks with geographically weighted regression",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Atmospheric Science",
    ],
    python_requires=">=3.10",
    entry_points={
        "console_scripts": ["gwr-calibration = main:main"]
    },
)
