import numpy as np
import pytest

from capgame.errors import CAPGameError, IngestError
from capgame.ingest import ReturnSeries, as_market, load_csv, path_series, write_csv
from capgame.moments import moments_of_path
from capgame.protocol import GameConfig, run_game
from capgame.strategies import FixedWeights, GBMMarket, HoldIndex, HoldIndexSpeculator


def write(tmp_path, text, name="r.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoad:
    def test_dated_row(self, tmp_path):
        series = load_csv(write(tmp_path, "date,index,stock\n2020-01-02,0.005,0.01\n"), 1 / 252)
        assert series.labels == ["index", "stock"]
        assert series.num_securities == 1 and series.num_rounds == 1
        np.testing.assert_array_equal(series.rows, [[0.005, 0.01]])
        assert series.row_labels == ["2020-01-02"]

    def test_no_label_column(self, tmp_path):
        series = load_csv(write(tmp_path, "index,a,b\n0.01,2e-3,-0.5\n0,0,0\n"), 0.1)
        np.testing.assert_array_equal(series.rows, [[0.01, 0.002, -0.5], [0, 0, 0]])
        assert series.row_labels is None

    def test_numeric_round_label(self, tmp_path):
        series = load_csv(write(tmp_path, "round,index,a\n1,0.01,0.02\n2,0.03,0.04\n"), 0.1)
        assert series.labels == ["index", "a"]
        assert series.row_labels == ["1", "2"]

    def test_domain_error_line(self, tmp_path):
        path = write(tmp_path, "date,index,stock\nd1,0.01,0.0\nd2,-1.5,0.0\n")
        with pytest.raises(IngestError) as info:
            load_csv(path, 1.0)
        assert info.value.line == 3
        assert ":3:" in str(info.value)

    def test_exactly_minus_one(self, tmp_path):
        with pytest.raises(IngestError, match="<= -1"):
            load_csv(write(tmp_path, "index,a\n0.0,-1\n"), 1.0)

    def test_header_only(self, tmp_path):
        with pytest.raises(IngestError, match="empty series"):
            load_csv(write(tmp_path, "date,index,stock\n"), 1.0)

    def test_empty_file(self, tmp_path):
        with pytest.raises(IngestError, match="empty file"):
            load_csv(write(tmp_path, ""), 1.0)

    def test_wrong_arity(self, tmp_path):
        with pytest.raises(IngestError) as info:
            load_csv(write(tmp_path, "index,a\n0.1,0.2\n0.1\n"), 1.0)
        assert info.value.line == 3

    @pytest.mark.parametrize("cell", ["abc", "nan", "inf"])
    def test_non_numeric(self, tmp_path, cell):
        with pytest.raises(IngestError) as info:
            load_csv(write(tmp_path, f"date,index,a\nd,0.1,{cell}\n"), 1.0)
        assert info.value.line == 2

    def test_missing_value(self, tmp_path):
        with pytest.raises(IngestError, match="missing value"):
            load_csv(write(tmp_path, "index,a\n0.1,\n"), 1.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError):
            load_csv(tmp_path / "absent.csv", 1.0)

    def test_series_validates(self):
        with pytest.raises(IngestError):
            ReturnSeries(["index"], [[0.1]], dt=0.0)
        with pytest.raises(IngestError):
            ReturnSeries(["index", "a"], [[0.1]], dt=1.0)


class TestRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        x = rng.normal(0, 0.02, (500, 3))
        path = tmp_path / "p.csv"
        write_csv(path_series(x, 0.01), path)
        back = load_csv(path, 0.01)
        assert back.rows.tobytes() == x.tobytes()
        assert back.labels == ["index", "sec1", "sec2"]
        assert back.row_labels[0] == "1"

    def test_replayed_moments(self, tmp_path):
        cfg = GameConfig(1, 1000, 1e-3)
        x = GBMMarket([0.05, 0.08], [0.2, 0.3], 0.5, seed=12).returns(cfg)
        path = tmp_path / "g.csv"
        write_csv(path_series(x, cfg.dt), path)
        series = load_csv(path, cfg.dt)
        _, acc = run_game(cfg, FixedWeights([0.5, 0.5]), HoldIndexSpeculator(), as_market(series))
        direct = moments_of_path(x @ np.array([0.5, 0.5]), x[:, 0], cfg.dt).to_dict()
        for key, value in acc.summarize().to_dict().items():
            assert value == pytest.approx(direct[key], rel=1e-12, abs=1e-300), key

    def test_unlabelled_round_trip(self, tmp_path):
        series = ReturnSeries(["index", "a"], [[0.1, 1e-300], [1 / 3, -0.999]], dt=1.0)
        path = tmp_path / "u.csv"
        write_csv(series, path)
        assert path.read_text().splitlines()[0] == "index,a"
        assert load_csv(path, 1.0).rows.tobytes() == series.rows.tobytes()


class TestReplay:
    def test_exhausts_after_rows(self, tmp_path):
        series = load_csv(write(tmp_path, "index,a\n0.1,0.2\n0.0,0.1\n-0.1,0.3\n"), 1.0)
        market = as_market(series)
        np.testing.assert_array_equal(market.returns(GameConfig(1, 3, 1.0)), series.rows)
        with pytest.raises(CAPGameError):
            market.returns(GameConfig(1, 4, 1.0))

    def test_deterministic_history(self, tmp_path, rng):
        path = tmp_path / "d.csv"
        write_csv(path_series(rng.normal(0, 0.01, (50, 2)), 0.1), path)
        series = load_csv(path, 0.1)
        cfg = GameConfig(1, 50, 0.1)
        a, _ = run_game(cfg, FixedWeights([0.2, 0.8]), HoldIndexSpeculator(), as_market(series))
        b, _ = run_game(cfg, FixedWeights([0.2, 0.8]), HoldIndexSpeculator(), as_market(series))
        assert a.returns_matrix().tobytes() == b.returns_matrix().tobytes()
        assert a.investor_capital == b.investor_capital

    def test_index_only_series(self, tmp_path):
        series = load_csv(write(tmp_path, "date,index\nd1,0.01\nd2,-0.02\n"), 1.0)
        assert series.num_securities == 0
        # pad with a copy of the index so the hold-index investor has a game to play
        rows = np.hstack([series.rows, series.rows])
        state, acc = run_game(GameConfig(1, 2, 1.0), HoldIndex(), HoldIndexSpeculator(), as_market(
            ReturnSeries(["index", "index"], rows, 1.0)
        ))
        s = acc.summarize()
        assert s.mu_s == s.mu_m and s.sigma_diff_sq == 0.0
