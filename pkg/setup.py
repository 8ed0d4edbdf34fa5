import setuptools

setuptools.setup(
    name="simplex_market",
    version="0.0.1",
    description="Polynomial diffusion models of market weights on the unit simplex",
    # long_description=long_description,
    # long_description_content_type="text/markdown",
    # url="",
    classifiers=["Programming Language :: Python :: 3"],
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    python_requires="~=3.9",
    # not specifying versions might result in pip downloading multiple versions
    # of a package in order to solve dependencies
    # therfore it might be useful to fix the versions someday
    install_requires=["tqdm", "numpy", "scipy", "pandas"],
    extras_require={
        "dev": [
            "black",
            "pylint",
            "jupyter",
            "pytest",
            "pytest-benchmark",
        ]
    },
    entry_points={"console_scripts": ["simplex-market=simplex_market.cli:cli"]},
    include_package_data=True,
    use_scm_version=True,
)
