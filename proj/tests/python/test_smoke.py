import json
import os

import numpy as np
import pytest

import nfvscale

SRC = os.environ.get("NFVSCALE_SOURCE_DIR", os.path.join(os.path.dirname(__file__), "..", ".."))
QUICK = os.path.join(SRC, "configs", "quick.jsonc")


def small(*extra):
    return nfvscale.load_config(QUICK, ["workload.duration_ms=100", *extra])


def test_defaults_round_trip():
    cfg = nfvscale.load_config()
    assert nfvscale.resolved(cfg)["server_mapper"]["margin"] == 0.1
    assert cfg.slos_us == [200.0]
    assert cfg.modes == ["full"]
    assert "chain" in nfvscale.default_config_text()


def test_bad_key_raises():
    with pytest.raises(nfvscale.ConfigError, match="unknown config key"):
        nfvscale.load_config(overrides=["rack.cores=3"])


def test_trace_columns_and_csv():
    t = nfvscale.workload(small())
    cols = t.columns()
    assert len(t) == len(cols["arrival_ns"]) > 0
    assert np.all(np.diff(cols["arrival_ns"]) >= 0)
    back = nfvscale.Trace.from_csv_text(t.to_csv())
    assert len(back) == len(t)
    assert np.array_equal(back.columns()["flow_id"], cols["flow_id"])
    stats = nfvscale.trace_stats(t)
    assert stats["packets"] == len(t)


def test_bad_trace_raises():
    with pytest.raises(nfvscale.TraceError):
        nfvscale.Trace.from_csv_text("arrival_ns,flow_id,dst_addr,size\n5,1,0\n")


def test_hash_only_needs_no_predictors():
    cfg = small()
    t = nfvscale.workload(cfg)
    r = nfvscale.run(cfg, t, mode="hash_only")
    assert r["arrivals"] == len(t)
    assert r["audit"]["conserved"]
    assert r["audit"]["order"] == 0


def test_full_without_predictors_raises():
    cfg = small()
    with pytest.raises(nfvscale.PredictorError):
        nfvscale.run(cfg, nfvscale.workload(cfg), mode="full")


def test_train_then_run_is_deterministic():
    cfg = small("training.flow_grid=[1,16,256]", "training.probe_duration_ms=100")
    t = nfvscale.workload(cfg)
    p = nfvscale.train(cfg, trace=t)
    assert p.rates_text() == nfvscale.train(cfg, trace=t).rates_text()
    a = nfvscale.run(cfg, t, mode="full", predictors=p)
    b = nfvscale.run(cfg, t, mode="full", predictors=p)
    assert a["event_digest"] == b["event_digest"]
    assert a["audit"]["conserved"] and a["audit"]["affinity"] == 0
    assert a["avg_cores"] > 0
    json.dumps(a)
