import pathlib

from setuptools import find_packages
from setuptools import setup


def package_files(*directories):
    for directory in directories:
        for path in pathlib.Path('hyperforce', directory).glob('**/*'):
            if not path.is_dir():
                yield str(path.relative_to('hyperforce'))


def parse_requirements(filename, *args, **kwargs):
    """ load requirements from a pip requirements file """
    lineiter = (line.strip() for line in open(filename))
    return [line for line in lineiter if line and not line.startswith("#")]


def get_long_description():
    with open('README.md') as readme_file:
        return readme_file.read()


setup(
    name='hyperforce',
    version='0.1.0.dev0',
    description='Numerical verification of equilibrium sum rules for classical many-body Hamiltonians.',
    long_description=get_long_description(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    install_requires=[str(r) for r in parse_requirements('base_requirements.txt', session=False)],
    test_suite='tests',
    entry_points={
        'console_scripts': [
            'hyperforce = hyperforce.entrypoints.hyperforce:cli',
        ],
    },
    package_dir={'hyperforce': 'hyperforce'},
    package_data={'hyperforce': list(package_files('templates', 'definitions'))},
    include_package_data=True,
    license='BSD',
    python_requires='>=3.8',
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
