import numpy as np
import pytest

from fusionkd.logger import get_logger
from fusionkd.objects.seeding import STREAM_IDS, stream


def test_logger_writes_to_log_location(tmp_path):
    path = tmp_path / "logs" / "fusionkd.log"
    logger = get_logger(name="fusionkd_test")
    logger.info("Run started. seed=%s", 3)
    for handler in logger.handlers:
        handler.flush()
    assert "fusionkd_test: Run started. seed=3" in path.read_text()
    assert get_logger(name="fusionkd_test") is logger


def test_explicit_log_path(tmp_path):
    target = tmp_path / "other.log"
    logger = get_logger(str(target), name="fusionkd_explicit")
    logger.warning("Skipping class. class=%s", 2)
    for handler in logger.handlers:
        handler.flush()
    assert "WARNING fusionkd_explicit: Skipping class. class=2" in target.read_text()


def test_named_streams_are_reproducible_and_distinct():
    assert np.array_equal(stream(5, "init").normal(size=4), stream(5, "init").normal(size=4))
    assert not np.array_equal(stream(5, "init").normal(size=4), stream(5, "batching").normal(size=4))
    assert not np.array_equal(stream(5, "init").normal(size=4), stream(6, "init").normal(size=4))
    assert len(set(STREAM_IDS.values())) == len(STREAM_IDS)
    with pytest.raises(KeyError):
        stream(0, "unknown")
