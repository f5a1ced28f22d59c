import numpy as np
import pytest

from gazesynth.facemodel import ReferenceFaceModel
from gazesynth.fixtures import generate_face, random_face_spec


@pytest.fixture(scope="session")
def model():
    return ReferenceFaceModel.generic()


@pytest.fixture(scope="session")
def face_fixture():
    """One shared synthetic face (spec, sample) at subdivision 1."""
    spec = random_face_spec(42, subdivision=1)
    return spec, generate_face(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
