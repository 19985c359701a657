import pytest

from .. import config, errors


def test_tolerances_replace():
    tol = config.DEFAULT.replace(sing=1e-9, drift=0.0)
    assert tol.sing == 1e-9 and tol.drift == 0.0
    assert tol.deg == config.DEFAULT.deg
    assert config.DEFAULT.sing == 1e-6, "DEFAULT is not modified"

    with pytest.raises(ValueError) as error:
        config.DEFAULT.replace(singular=1e-9)
    assert "singular" in str(error.value)
    with pytest.raises(ValueError):
        config.DEFAULT.replace(deg=-1.0)


def test_threads(monkeypatch):
    monkeypatch.delenv(config.THREADS_ENV, raising=False)
    assert config.threads() == 1
    monkeypatch.setenv(config.THREADS_ENV, "")
    assert config.threads() == 1
    monkeypatch.setenv(config.THREADS_ENV, "4")
    assert config.threads() == 4
    for bad in ["four", "0"]:
        monkeypatch.setenv(config.THREADS_ENV, bad)
        with pytest.raises(ValueError):
            config.threads()


def test_error_families():
    assert issubclass(errors.OutOfRange, ValueError)
    assert issubclass(errors.SingularClosure, ArithmeticError)
    assert issubclass(errors.BadSchema, errors.QuadlabError)
    failure = errors.CheckFailure("family.lame", report=dict(checks=[]))
    assert failure.report == dict(checks=[])
    assert str(failure) == "family.lame"
