import pytest

from quadhedge.lattice import PayoffSpec
from quadhedge.policy import ExercisePolicy
from quadhedge.reference import HIGH, MID, ex1_lattice, ex1_rn_measure

@pytest.fixture
def ex1():
    return ex1_lattice()


@pytest.fixture
def call3():
    return PayoffSpec.call(3)


@pytest.fixture
def call7():
    return PayoffSpec.call(7)


@pytest.fixture
def rn42():
    return ex1_rn_measure(1 / 42)


@pytest.fixture
def mid_policy():
    return ExercisePolicy.of([MID])


@pytest.fixture
def rn_policy():
    return ExercisePolicy.of([MID, HIGH])
