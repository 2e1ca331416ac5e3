from setuptools import setup, find_packages

setup(
    version='0.1.0',
    name='mmfs',
    packages=find_packages(exclude=['tests']),
    install_requires=[
        'attrs',
        'fire',
        'joblib',
        'json-log-plots',
        'numba',
        'numpy',
        'scipy',
        'tqdm',
    ],
    entry_points={
        'console_scripts': [
            'mmfs = mmfs.main:fire_main',
        ],
    }
)
