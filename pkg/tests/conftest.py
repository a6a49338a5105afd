import numpy as np
import pytest

# "The shy cat wants to eat" in DM style: predicates are The, shy, wants, eat.
DM_SAMPLE = "\n".join([
    "#20001001",
    "1\tThe\tthe\tDT\t-\t+\tq:i-h-h\t_\t_\t_\t_",
    "2\tshy\tshy\tJJ\t-\t+\tj:i\t_\t_\t_\t_",
    "3\tcat\tcat\tNN\t-\t-\tn:x\tBV\tARG1\tARG1\tARG1",
    "4\twants\twant\tVBZ\t+\t+\tv:e-i-h\t_\t_\t_\t_",
    "5\tto\tto\tTO\t-\t-\t_\t_\t_\t_\t_",
    "6\teat\teat\tVB\t-\t+\tv:e-i-p\t_\t_\tARG2\t_",
    "",
]) + "\n"


@pytest.fixture
def dm_text():
    return DM_SAMPLE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
