from setuptools import setup
from codecs import open  # To use a consistent encoding
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

# Get content from __about__.py
about = {}
with open(path.join(here, 'accdecoder', '__about__.py'), 'r', 'utf-8') as f:
    exec(f.read(), about)


setup(
    name='accdecoder',

    # Versions should comply with PEP440.  For a discussion on single-sourcing
    # the version across setup.py and the project code, see
    # https://packaging.python.org/en/latest/single_source_version.html
    version=about['__version__'],

    description="Simulator for scheduling super-resolution, MV-based transfer and detection reuse "
                "over the frames of a decoded video.",
    long_description=long_description,

    license='Apache 2.0',
    classifiers=[
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Topic :: Multimedia :: Video',
        'Framework :: Pytest',
    ],
    python_requires='>=3.8',
    install_requires=[
        'flexisettings>=1.0.1,<1.1',
        'numpy>=1.17',
        'opencv-python-headless>=4.2',
        'torch>=1.8',
        'PyYAML>=5.1',
        'matplotlib>=3.1',
    ],

    packages=[
        'accdecoder',
        'accdecoder.conf',
        'accdecoder.scheduler',
        'accdecoder.harness',
    ],
    entry_points={
        'pytest11': [
            'accdecoder.pytest_plugin = accdecoder.pytest_plugin',
        ],
        'console_scripts': [
            'accdecoder = accdecoder.harness.cli:main',
        ],
    },
)
