import os
from setuptools import setup, find_packages

module_dir = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(module_dir, "listrx", "__init__.py"), "r") as f:
    version = [l.split('"')[1] for l in f if l.startswith("__version__")][0]
with open(os.path.join(module_dir, "requirements.txt"), "r") as f:
    requirements = [r for r in f.read().replace(" ", "").split("\n")
                    if r and not r.startswith("hypothesis")]

long_description = \
    """
    listrx estimates interpretable treatment regimes written as decision lists
    ("if x1 <= 1 and x2 > -0.6 then T, else C").

    - Doubly robust value estimation with multinomial logistic propensity
      and (LASSO) generalized linear outcome models
    - Greedy, variance-gated list search over one- and two-covariate clauses
    - Rewriting a list into its cheapest equivalent when covariates cost
      money to measure
    - Weighted bootstrap bias correction and prediction intervals for the
      value of the fitted regime
    - A simulation lab with seven benchmark settings and study drivers
    """

setup(
    name='listrx',
    version=str(version),
    description='Interpretable decision-list treatment regimes',
    author='The listrx developers',
    long_description=long_description,
    long_description_content_type="text/markdown",
    license='modified BSD',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Medical Science Apps.',
        'Topic :: Scientific/Engineering',
        'Operating System :: OS Independent',
        ],
    keywords='treatment-regimes decision-lists causal-inference '
             'precision-medicine',
    test_suite='listrx',
    tests_require=['hypothesis'],
    python_requires='>=3.8',
    packages=find_packages(),
    package_data={'listrx': ['defaults.yaml', 'schemas/*.json',
                             'examples/data/*.csv']},
    install_requires=requirements,
    entry_points={'console_scripts': ['listrx=listrx.cli:main']},
    include_package_data=True
)
