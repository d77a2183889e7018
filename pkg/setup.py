#!/usr/bin/env python

import glob
import os

from setuptools import setup

with open('requirements.txt') as f:
    requirements = f.read().splitlines()

with open('VERSION') as f:
    version = f.read().strip()

data_files = [
    ('etc', ['etc/read-pipeline-config.yml']),
]
scripts = [p for p in glob.glob("bin/*") if os.path.isfile(p)]

setup(
    name='read_pipeline',
    version=version,
    description='District demographics from satellite imagery tiles.',
    url='',
    packages=['read_pipeline', 'read_pipeline.api', 'read_pipeline.client', 'read_pipeline.common',
              'read_pipeline.geo', 'read_pipeline.model', 'read_pipeline.plan', 'read_pipeline.regression',
              'read_pipeline.session', 'read_pipeline.stats', 'read_pipeline.store', 'read_pipeline.synth'],
    package_dir={'': 'src'},
    data_files=data_files,
    scripts=scripts,
    include_package_data=True,
    install_requires=requirements,
    classifiers=[]
)
