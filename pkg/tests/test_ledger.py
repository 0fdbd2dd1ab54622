import pytest

from schro_ldp.errors import ValidationError
from schro_ldp.ledger import list_runs, record_run


@pytest.fixture
def ledger_url(tmp_path):
    return f"sqlite:///{tmp_path / 'ledger' / 'runs.db'}"


class TestRecordRun:
    def test_successful_run(self, ledger_url):
        with record_run(ledger_url, "ldp", 2**64 - 1, "abc") as handle:
            assert handle.enabled
            handle.event("STAGE", {"stage": "rate_inf", "value": 1.125})
            handle.event("RESULT", {"verdict": "pass"})
        (run,) = list_runs(ledger_url)
        assert run["status"] == "ok"
        assert run["exit_code"] == 0
        assert run["seed"] == str(2**64 - 1)
        assert sorted(e["type"] for e in run["events"]) == ["RESULT", "STAGE"]

    def test_failed_run_keeps_the_exit_code(self, ledger_url):
        with pytest.raises(ValidationError):
            with record_run(ledger_url, "rate", None, "abc"):
                raise ValidationError("bad input")
        (run,) = list_runs(ledger_url)
        assert run["status"] == "failed"
        assert run["exit_code"] == 1
        assert run["events"] == [{"type": "ERROR", "payload": {"message": "bad input"}}]

    def test_disabled_ledger(self):
        with record_run(None, "ot", 0, "abc") as handle:
            assert not handle.enabled
            handle.event("STAGE", {})


class TestListRuns:
    def test_filter_by_config_hash(self, ledger_url):
        for config_hash in ("one", "two", "two"):
            with record_run(ledger_url, "ldp", 1, config_hash):
                pass
        assert len(list_runs(ledger_url)) == 3
        assert len(list_runs(ledger_url, config_hash="two")) == 2
        assert list_runs(ledger_url, config_hash="three") == []

    def test_filter_by_command(self, ledger_url):
        for command in ("ldp", "rate", "ldp"):
            with record_run(ledger_url, command, 1, "abc"):
                pass
        assert [r["command"] for r in list_runs(ledger_url, command="ldp")] == ["ldp", "ldp"]
        assert len(list_runs(ledger_url, config_hash="abc", command="rate")) == 1
        assert list_runs(ledger_url, command="ot") == []
