from setuptools import setup, find_packages

setup(
    name="kg-rep",
    version="0.1",
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    install_requires=[
        'numpy==1.26.4',
        'SQLAlchemy==2.0.19',
        'python-dotenv==1.0.0',
        'pydantic==2.6.1',
        'structlog==23.1.0',
    ],
    python_requires='>=3.9',
)
