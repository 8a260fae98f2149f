import pytest


@pytest.fixture(autouse=True)
def enable_debug():
    from goldenir.utils import set_debug

    set_debug(True)


@pytest.fixture
def bush_corpus():
    """Documents sharing the words of "George W. Bush", only one of which
    has exactly that title.
    """
    from goldenir import Document

    return [
        Document(
            0,
            "George W. Bush Presidential Library",
            (
                "The George W. Bush Presidential Library is the presidential "
                "library of George W. Bush.",
                "It is located on the campus of Southern Methodist "
                "University, George Bush said.",
            ),
        ),
        Document(
            1,
            "George W. Bush",
            ("George Walker Bush is an American politician.",),
        ),
        Document(
            2,
            "Bush",
            ("Bush may refer to a shrub, or George W. Bush, George Bush.",),
        ),
        Document(
            3,
            "Laura Bush",
            ("Laura Bush is the wife of George W. Bush and a librarian.",),
        ),
        Document(
            4,
            "Armada (novel)",
            ("Armada is a science fiction novel by Ernest Cline.",),
        ),
    ]


@pytest.fixture
def bush_index(bush_corpus):
    from goldenir import build

    return build(bush_corpus)
