import codecs

from setuptools import find_packages, setup

with codecs.open("readme.rst", "r", "utf-8") as fd:

    setup(
        name='sctpath',
        version='0.1',
        packages=find_packages(exclude=['tests']),
        license='GNU Lesser General Public License v3',
        author='The sctpath developers',
        description='Sparse convolutional transformer for tissue-block '
                    'classification on grids of tile embeddings',
        long_description=fd.read(),
        install_requires=['numpy>=1.22', 'scipy>=1.7', 'pandas>=1.3',
                          'scikit-learn>=1.0'],
        python_requires='>=3.8',
        entry_points={'console_scripts': ['sctpath=sctpath.cli:main']},
        keywords='pathology multiple instance learning sparse attention',
        classifiers=[
                  'Development Status :: 3 - Alpha',
                  'Intended Audience :: Science/Research',
                  'License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)',
                  'Operating System :: OS Independent',
                  'Topic :: Scientific/Engineering :: Medical Science Apps.',
                  'Topic :: Scientific/Engineering :: Artificial Intelligence',
                  'Programming Language :: Python',
                  'Programming Language :: Python :: 3',
                  'Programming Language :: Python :: 3.8',
                  'Programming Language :: Python :: 3.9',
                  'Programming Language :: Python :: 3.10',
                  'Programming Language :: Python :: 3.11'
              ],
    )
