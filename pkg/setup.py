from setuptools import find_packages, setup

setup(name='exodyad',
      version='0.1.0',
      description='Simulation and analysis of virtually coupled therapist-patient exoskeleton dyads',
      packages=find_packages(exclude=['tests', 'tests.*']),
      python_requires='>=3.9',
      install_requires=[
          'aiofiles==23.1.0',
          'numpy>=1.24,<3',
          'scipy>=1.11',
          'structlog==23.1.0',
          'tqdm==4.65.0',
      ],
      extras_require={'test': ['pytest>=7.3', 'pytest-asyncio>=0.21']},
      entry_points={'console_scripts': ['exodyad=exodyad.cli:run']},
      zip_safe=False)
